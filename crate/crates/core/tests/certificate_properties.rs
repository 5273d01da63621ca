use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synccert::certificate::{assemble_psi_q, edge_margin, gain_bound, sector_box_samples};
use synccert::positivity::{edge_condition, pd_oracle, weighted_edge_gram, Verdict};
use synccert::{eigen, EdgeCertificate, Execution, Graph, NetworkCertificate, SectorBound};

fn random_network(seed: u64, max_nodes: usize) -> (Graph, NetworkCertificate) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let g = Graph::random_connected(n, rng.random_range(0.3..1.0), &mut rng).unwrap();
    let sectors = (0..g.edge_count())
        .map(|_| {
            let lo = rng.random_range(0.5..4.0);
            SectorBound::new(lo, lo + rng.random_range(0.0..2.0)).unwrap()
        })
        .collect();
    let edges = (0..g.edge_count())
        .map(|_| {
            EdgeCertificate::new(-rng.random_range(0.0..0.05), rng.random_range(-5.0..1.0), -rng.random_range(0.0..2.0))
                .unwrap()
        })
        .collect();
    let cert = NetworkCertificate::new(&g, sectors, edges).unwrap();
    (g, cert)
}

fn rebuild(
    g: &Graph,
    cert: &NetworkCertificate,
    edit: impl Fn(usize, &mut SectorBound, &mut EdgeCertificate),
) -> NetworkCertificate {
    let mut sectors = cert.sectors().to_vec();
    let mut edges = cert.edges().to_vec();
    for k in 0..edges.len() {
        edit(k, &mut sectors[k], &mut edges[k]);
    }
    NetworkCertificate::new(g, sectors, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_is_monotone_in_gamma_nu_and_upper_sector(seed in any::<u64>(), edge in 0usize..64, step in 0.01f64..1.0) {
        let (g, cert) = random_network(seed, 7);
        let base = edge_margin(&cert).slacks;
        let e = edge % g.edge_count();

        let more_gamma = rebuild(&g, &cert, |k, _, c| if k == e { c.gamma -= step });
        for (a, b) in edge_margin(&more_gamma).slacks.iter().zip(&base) {
            prop_assert!(a <= b);
        }

        let more_nu = rebuild(&g, &cert, |k, _, c| if k == e { c.nu -= step });
        for (a, b) in edge_margin(&more_nu).slacks.iter().zip(&base) {
            prop_assert!(*a <= *b + 1e-15);
        }

        let wider = rebuild(&g, &cert, |k, s, _| if k == e { s.upper += step });
        for (a, b) in edge_margin(&wider).slacks.iter().zip(&base) {
            prop_assert!(*a <= *b + 1e-15);
        }
    }

    #[test]
    fn positive_gamma_behaves_like_zero(seed in any::<u64>(), gamma in 1e-6f64..10.0) {
        let (g, cert) = random_network(seed, 6);
        let pos = rebuild(&g, &cert, |_, _, c| c.gamma = gamma);
        let zero = rebuild(&g, &cert, |_, _, c| c.gamma = 0.0);
        prop_assert_eq!(edge_margin(&pos).slacks, edge_margin(&zero).slacks);
        let a = assemble_psi_q(&g, &pos).unwrap();
        let b = assemble_psi_q(&g, &zero).unwrap();
        prop_assert_eq!(a.q, b.q);
        prop_assert_eq!(a.psi, b.psi);
    }

    #[test]
    fn q_positive_implies_every_sampled_n_positive(seed in any::<u64>()) {
        let (g, cert) = random_network(seed, 5);
        let pq = assemble_psi_q(&g, &cert).unwrap();
        prop_assert_eq!(&pq.psi, &pq.psi.transpose());
        prop_assert_eq!(&pq.q, &pq.q.transpose());
        let samples = sector_box_samples(cert.sectors(), 16, seed);
        let gb = gain_bound(&g, &cert, &samples, Execution::Sequential).unwrap();
        if pq.q_min_eigenvalue > 0.0 {
            prop_assert!(gb.mu_lo > 0.0, "λ_min(Q) = {} but μ_lo = {}", pq.q_min_eigenvalue, gb.mu_lo);
        }
        if gb.certified() {
            prop_assert!(gb.rho >= 0.5f64.sqrt());
            prop_assert_eq!(gb.epsilon == 0.0, gb.beta_bar == 0.0);
        }
    }

    #[test]
    fn flipping_edges_preserves_spectrum_and_laplacian(seed in any::<u64>(), mask in any::<u32>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=7);
        let g = Graph::random_connected(n, 0.6, &mut rng).unwrap();
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(0.0..3.0)).collect();
        let flips: Vec<usize> = (0..g.edge_count()).filter(|k| mask >> (k % 32) & 1 == 1).collect();
        let d = g.incidence();
        let f = d.with_flipped(&flips);
        prop_assert_eq!(d.laplacian(), f.laplacian());
        let a = eigen::symmetric_eigenvalues(&weighted_edge_gram(&d, &mu, &sigma)).unwrap();
        let b = eigen::symmetric_eigenvalues(&weighted_edge_gram(&f, &mu, &sigma)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn edge_condition_is_sound_on_random_graphs() {
    let mut counterexamples = Vec::new();
    let mut holds = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=8);
        let g = Graph::random_connected(n, rng.random_range(0.2..1.0), &mut rng).unwrap();
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let sigma: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(0.0..=3.0)).collect();
        let report = edge_condition(&g, &mu, &sigma).unwrap();
        if report.verdict == Verdict::Holds {
            holds += 1;
            let lambda = pd_oracle(&g, &mu, &sigma).unwrap();
            if lambda <= 1e-10 {
                counterexamples.push((seed, g.to_spec(), mu, sigma, lambda));
            }
        }
    }
    assert!(counterexamples.is_empty(), "{counterexamples:?}");
    assert!(holds > 50, "only {holds} instances exercised the condition");
}
