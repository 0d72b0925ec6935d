use super::DiscreteProblem;
use crate::error::{arg, shape, Result};
use crate::types::{softmax_into, SoftSegmentation};

/// Mean-field marginals and the free energy before the first sweep and
/// after each sweep.
#[derive(Debug, Clone)]
pub struct MeanFieldResult {
    pub marginals: SoftSegmentation,
    pub free_energy_trace: Vec<f64>,
    pub sweeps: usize,
}

/// Naive mean-field free energy of a factorized distribution `Q`:
/// `Σ_p ⟨Q_p, unary_p⟩ + Σ_{pq} w_pq (1 − ⟨Q_p, Q_q⟩) + Σ_p ⟨Q_p, log Q_p⟩`.
pub fn mean_field_free_energy(problem: &DiscreteProblem, q: &SoftSegmentation) -> Result<f64> {
    check(problem, q)?;
    let mut f = 0.0;
    for p in 0..problem.num_pixels() {
        for (qk, uk) in q.row(p).iter().zip(problem.unary().row(p)) {
            if *qk > 0.0 {
                f += qk * uk + qk * qk.ln();
            }
        }
    }
    for e in problem.graph().edges() {
        let dot: f64 = q.row(e.p).iter().zip(q.row(e.q)).map(|(a, b)| a * b).sum();
        f += e.w * (1.0 - dot);
    }
    Ok(f)
}

fn check(problem: &DiscreteProblem, q: &SoftSegmentation) -> Result<()> {
    if q.num_pixels() != problem.num_pixels() || q.num_labels() != problem.num_labels() {
        return shape("marginals do not match the problem");
    }
    Ok(())
}

/// Sequential (Gauss–Seidel) naive mean field for Potts:
/// `Q_p(k) ∝ exp(−unary(p,k) − Σ_{q∼p} w_pq (1 − Q_q(k)))`, blended as
/// `(1 − damping) Q_new + damping Q_old`. Each update minimizes the free
/// energy in `Q_p` (damped updates interpolate towards that minimizer), so
/// the recorded trace is non-increasing.
pub fn mean_field_dense(
    problem: &DiscreteProblem,
    init: &SoftSegmentation,
    max_sweeps: usize,
    damping: f64,
) -> Result<MeanFieldResult> {
    if !(0.0..1.0).contains(&damping) {
        return arg(format!("damping must be in [0,1), got {damping}"));
    }
    check(problem, init)?;
    let k = problem.num_labels();
    let mut q = init.probs().to_vec();
    let mut trace = vec![mean_field_free_energy(problem, init)?];
    let mut scores = vec![0.0; k];
    let mut fresh = vec![0.0; k];
    for _ in 0..max_sweeps {
        for p in 0..problem.num_pixels() {
            for (s, u) in scores.iter_mut().zip(problem.unary().row(p)) {
                *s = -u;
            }
            for &(nb, w) in problem.graph().neighbors(p) {
                let qn = &q[nb * k..(nb + 1) * k];
                for (s, qv) in scores.iter_mut().zip(qn) {
                    *s -= w * (1.0 - qv);
                }
            }
            softmax_into(&scores, &mut fresh)?;
            let qp = &mut q[p * k..(p + 1) * k];
            for (old, new) in qp.iter_mut().zip(&fresh) {
                *old = (1.0 - damping) * new + damping * *old;
            }
        }
        let cur = SoftSegmentation::new(init.width(), init.height(), k, q.clone())?;
        trace.push(mean_field_free_energy(problem, &cur)?);
    }
    Ok(MeanFieldResult {
        marginals: SoftSegmentation::new(init.width(), init.height(), k, q)?,
        free_energy_trace: trace,
        sweeps: max_sweeps,
    })
}
