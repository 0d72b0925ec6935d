use super::maxflow::{FlowGraph, Segment};
use super::{check_init, finish, DiscreteProblem, SolveReport};
use crate::error::{arg, Result};
use crate::types::Labeling;

/// Sweeps used by the latent labeling step unless configured otherwise.
pub const DEFAULT_EXPANSION_SWEEPS: usize = 5;

/// Globally optimal labeling of a two-label problem via one min cut.
///
/// Node on the source side takes label 0, sink side label 1; the unary cost
/// of label 1 is the source capacity and that of label 0 the sink capacity.
pub fn maxflow_binary(problem: &DiscreteProblem) -> Result<SolveReport> {
    if problem.num_labels() != 2 {
        return arg(format!(
            "maxflow_binary needs K=2, got K={}",
            problem.num_labels()
        ));
    }
    let n = problem.num_pixels();
    let mut g = FlowGraph::new(n, problem.graph().edges().len());
    for p in 0..n {
        let row = problem.unary().row(p);
        add_unary(&mut g, p, row[0], row[1]);
    }
    for e in problem.graph().edges() {
        if e.w > 0.0 {
            g.add_edge(e.p, e.q, e.w, e.w);
        }
    }
    g.maxflow();
    let labels = (0..n)
        .map(|p| usize::from(g.segment(p) == Segment::Sink))
        .collect();
    let labeling = problem.labeling_from(labels)?;
    let e = problem.energy(&labeling)?;
    finish(problem, labeling, vec![e], 1, true)
}

/// Terminal links for a node whose cost is `cost0` on the source side and
/// `cost1` on the sink side; only the difference matters for the cut.
fn add_unary(g: &mut FlowGraph, p: usize, cost0: f64, cost1: f64) {
    let d = cost1 - cost0;
    if d > 0.0 {
        g.add_tweights(p, d, 0.0);
    } else if d < 0.0 {
        g.add_tweights(p, 0.0, -d);
    }
}

/// α-expansion for Potts energies: sweeps labels `0..K` in increasing order,
/// solving each "keep current label or switch to α" move exactly with a min
/// cut. A move is accepted only if it strictly lowers the energy. Stops after
/// `max_sweeps` or after a sweep without change.
pub fn alpha_expansion(
    problem: &DiscreteProblem,
    init: &Labeling,
    max_sweeps: usize,
) -> Result<SolveReport> {
    check_init(problem, init)?;
    let mut labels = init.labels().to_vec();
    let mut energy = problem.energy_of(&labels);
    let mut trace = vec![energy];
    let mut sweeps = 0;
    let mut converged = false;
    let mut d0 = vec![0.0; problem.num_pixels()];
    let mut d1 = vec![0.0; problem.num_pixels()];

    while sweeps < max_sweeps {
        let mut changed = false;
        for alpha in 0..problem.num_labels() {
            let proposal = expansion_move(problem, &labels, alpha, &mut d0, &mut d1);
            let e = problem.energy_of(&proposal);
            if e < energy - 1e-13 * energy.abs().max(1.0) {
                labels = proposal;
                energy = e;
                changed = true;
            }
        }
        sweeps += 1;
        trace.push(energy);
        if !changed {
            converged = true;
            break;
        }
    }
    let labeling = problem.labeling_from(labels)?;
    finish(problem, labeling, trace, sweeps, converged)
}

/// Optimal expansion of label `alpha` from `labels`.
fn expansion_move(
    problem: &DiscreteProblem,
    labels: &[usize],
    alpha: usize,
    d0: &mut [f64],
    d1: &mut [f64],
) -> Vec<usize> {
    let n = labels.len();
    let unary = problem.unary();
    for p in 0..n {
        d0[p] = unary.cost(p, labels[p]);
        d1[p] = unary.cost(p, alpha);
    }
    let edges = problem.graph().edges();
    let mut g = FlowGraph::new(n, edges.len());
    for e in edges {
        if e.w == 0.0 {
            continue;
        }
        let (lp, lq) = (labels[e.p], labels[e.q]);
        match (lp == alpha, lq == alpha) {
            (true, true) => {}
            // One endpoint already at α: the other pays w unless it joins α.
            (true, false) => d0[e.q] += e.w,
            (false, true) => d0[e.p] += e.w,
            (false, false) => {
                // E(0,0) = A, E(0,1) = E(1,0) = w, E(1,1) = 0, written as
                // A + (w − A) x_p − w x_q + (2w − A)(1 − x_p) x_q.
                let a = if lp != lq { e.w } else { 0.0 };
                d1[e.p] += e.w - a;
                d1[e.q] -= e.w;
                g.add_edge(e.p, e.q, 2.0 * e.w - a, 0.0);
            }
        }
    }
    for p in 0..n {
        if labels[p] != alpha {
            add_unary(&mut g, p, d0[p], d1[p]);
        }
    }
    g.maxflow();
    (0..n)
        .map(|p| {
            if labels[p] != alpha && g.segment(p) == Segment::Sink {
                alpha
            } else {
                labels[p]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::brute_force;
    use super::super::testutil::*;
    use super::*;

    #[test]
    fn zero_unaries_give_zero_energy() {
        let p = problem(vec![0.0; 8], 2, 4, vec![(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5)]);
        let r = maxflow_binary(&p).unwrap();
        assert_eq!(r.final_energy, 0.0);
        let l = r.labeling.labels();
        assert!(l.iter().all(|&x| x == l[0]));
    }

    #[test]
    fn two_pixel_forced_cut() {
        // Pixel 0 wants label 0, pixel 1 wants label 1, violation costs 10.
        let p = problem(vec![0.0, 10.0, 10.0, 0.0], 2, 2, vec![(0, 1, 1.0)]);
        let r = maxflow_binary(&p).unwrap();
        assert_eq!(r.labeling.labels(), &[0, 1]);
        assert_eq!(r.final_energy, 1.0);
    }

    #[test]
    fn rejects_non_binary() {
        let p = problem(vec![0.0; 3], 3, 1, vec![]);
        assert!(maxflow_binary(&p).is_err());
    }

    #[test]
    fn binary_matches_brute_force() {
        for seed in 0..60 {
            let p = random_problem(seed, 4, 3, 2);
            let mf = maxflow_binary(&p).unwrap();
            let bf = brute_force(&p).unwrap();
            assert_eq!(mf.final_energy, bf.final_energy, "seed {seed}");
        }
    }

    #[test]
    fn expansion_with_two_labels_is_exact() {
        for seed in 100..140 {
            let p = random_problem(seed, 4, 3, 2);
            let init = Labeling::constant(4, 3, 2, (seed % 2) as usize).unwrap();
            let ae = alpha_expansion(&p, &init, DEFAULT_EXPANSION_SWEEPS).unwrap();
            assert_eq!(ae.final_energy, maxflow_binary(&p).unwrap().final_energy);
        }
    }

    #[test]
    fn expansion_quality_on_three_labels() {
        let mut exact = 0;
        for seed in 0..100 {
            let p = random_problem(1000 + seed, 3, 3, 3);
            let init = Labeling::constant(3, 3, 3, 0).unwrap();
            let ae = alpha_expansion(&p, &init, 10).unwrap();
            let bf = brute_force(&p).unwrap();
            assert!(ae.energy_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(ae.final_energy <= 2.0 * bf.final_energy + 1e-12);
            assert!(ae.final_energy >= bf.final_energy);
            if ae.final_energy == bf.final_energy {
                exact += 1;
            }
        }
        assert!(exact >= 95, "exact on {exact}/100");
    }

    #[test]
    fn optimal_init_is_kept() {
        let p = random_problem(5, 3, 3, 3);
        let opt = brute_force(&p).unwrap().labeling;
        let r = alpha_expansion(&p, &opt, 5).unwrap();
        assert_eq!(r.labeling, opt);
        assert_eq!(r.sweeps, 1);
        assert!(r.converged);
    }

    #[test]
    fn init_shape_checked() {
        let p = random_problem(5, 3, 3, 3);
        assert!(alpha_expansion(&p, &Labeling::constant(9, 1, 3, 0).unwrap(), 5).is_err());
    }
}
