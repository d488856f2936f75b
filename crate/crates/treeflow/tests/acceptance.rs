//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success). Tolerances
//! and replica counts are fixed here, not tuned at runtime.

use std::time::Instant;

use treeflow::diagnostics::{
    check_enumeration_identities, estimate_holder, fit_envelope, q_growth_check, sde_marginals,
    spde_marginals, tree_marginals,
};
use treeflow::embed::{embed, MonotoneFlowField, RescaledFlow};
use treeflow::enumerate::{enumerate_continuations, enumerate_gibbs_marginal};
use treeflow::graph::{compose, MonotoneGraph};
use treeflow::offspring::{solve_gibbs, EnergySpec, OffspringDistribution};
use treeflow::sde::{simulate_z, DiffusionConfig};
use treeflow::spde::{solve_flow, BrownianSheet, SheetConfig};
use treeflow::stats::{chi_square_gof, ks_two_sample, mean, median, standard_error};
use treeflow::stream::{derive_seed, derive_stream};
use treeflow::tree::{sample_chain_from, sample_next, Generation};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn uniform() -> OffspringDistribution {
    solve_gibbs(&EnergySpec::new(vec![0.0, 0.0, 0.0], 1.0), 1e-12).unwrap()
}

#[test]
fn acceptance_c01_gibbs_closed_forms() {
    let start = Instant::now();
    let flat = uniform();
    let mut worst = 0.0f64;
    for (i, &pi) in flat.p.iter().enumerate() {
        worst = worst.max((pi - 1.0 / 3.0).abs());
        let _ = i;
    }
    worst = worst.max((flat.rho - 1.0).abs());
    worst = worst.max((flat.c - 1.0 / 3.0).abs());

    let spec = EnergySpec::new(vec![0.0, 0.0, (2.0f64).ln()], 1.0);
    let tilted = solve_gibbs(&spec, 1e-12).unwrap();
    worst = worst.max((tilted.rho - 2.0f64.sqrt()).abs());
    // Residuals of both sides of the fixed-point equations.
    for dist in [&flat, &tilted] {
        let norm: f64 = dist.p.iter().sum::<f64>() - 1.0;
        let crit: f64 = dist
            .p
            .iter()
            .enumerate()
            .map(|(i, &pi)| i as f64 * pi)
            .sum::<f64>()
            - 1.0;
        worst = worst.max(norm.abs()).max(crit.abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed.as_secs_f64() < 1.0;
    report(
        "1 (fixed-point solver)",
        pass,
        &format!("max residual {worst:.2e}, elapsed {elapsed:?}"),
    );
}

#[test]
fn acceptance_c02_kernel_exactness() {
    let mut worst_norm = 0.0f64;
    let mut worst_mean = 0.0f64;
    for energies in [vec![0.0, 0.0, 0.0], vec![0.2, -0.1, 0.4], vec![0.0, 0.3, 0.1, 0.25]] {
        let dist = solve_gibbs(&EnergySpec::new(energies, 1.1), 1e-12).unwrap();
        for k in 1..=4usize {
            let g = Generation::initial(k).unwrap();
            let support = enumerate_continuations(&g, &dist, 64).unwrap();
            let total: f64 = support.iter().map(|(_, p)| p).sum();
            let mean_size: f64 = support.iter().map(|(gen, p)| gen.len() as f64 * p).sum();
            worst_norm = worst_norm.max((total - 1.0).abs());
            worst_mean = worst_mean.max((mean_size - (k as f64 + dist.mu)).abs());
        }
    }
    let pass = worst_norm <= 1e-12 && worst_mean <= 1e-12;
    report(
        "2 (kernel exactness)",
        pass,
        &format!("normalization residual {worst_norm:.2e}, mean residual {worst_mean:.2e}"),
    );
}

#[test]
fn acceptance_c03_enumeration_identities() {
    let mut worst_progeny = 0.0f64;
    let mut worst_share_stated = 0.0f64;
    let mut worst_share_enumerated = 0.0f64;
    for energies in [vec![0.0, 0.0, 0.0], vec![0.1, -0.2, 0.3], vec![0.0, 0.2, 0.1, 0.3]] {
        let dist = solve_gibbs(&EnergySpec::new(energies, 1.0), 1e-12).unwrap();
        let rep = check_enumeration_identities(&dist, 3, 1_000_000).unwrap();
        worst_progeny = worst_progeny.max(rep.max_residual_progeny_mean);
        worst_share_stated =
            worst_share_stated.max(rep.max_residual_share_with_extinction_term);
        worst_share_enumerated = worst_share_enumerated.max(rep.max_residual_share_martingale);
    }
    println!(
        "criterion 3 detail: E[V'|l,k] residual {worst_progeny:.2e}; \
         E[V'/X'|l,k] vs l/k - p0^k/k residual {worst_share_stated:.2e}; \
         E[V'/X'|l,k] vs l/k residual {worst_share_enumerated:.2e}"
    );
    let pass = worst_progeny <= 1e-12 && worst_share_stated <= 1e-12;
    report(
        "3 (one-step progeny identities)",
        pass,
        &format!(
            "progeny-mean residual {worst_progeny:.2e}, share residual vs stated form \
             {worst_share_stated:.2e} (exhaustive enumeration gives E[V'/X'|l,k] = l/k \
             exactly, residual {worst_share_enumerated:.2e})"
        ),
    );
}

#[test]
fn acceptance_c04_sampler_fidelity() {
    let start = Instant::now();
    let dist = uniform();
    let g = Generation::initial(2).unwrap();
    let support = enumerate_continuations(&g, &dist, 64).unwrap();
    let index: std::collections::HashMap<_, _> = support
        .iter()
        .enumerate()
        .map(|(i, (gen, _))| (gen.clone(), i))
        .collect();
    let mut counts = vec![0u64; support.len()];
    let mut rng = derive_stream(104, "acceptance-gof", 0);
    for _ in 0..100_000 {
        counts[index[&sample_next(&g, &dist, &mut rng)]] += 1;
    }
    let probs: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
    let rep = chi_square_gof("acceptance", &counts, &probs, 0.001).unwrap();
    let elapsed = start.elapsed();
    let pass = rep.pass && elapsed.as_secs_f64() < 10.0;
    report(
        "4 (sampler fidelity)",
        pass,
        &format!(
            "chi-square {:.3} on {} cells, p = {:.4}, elapsed {elapsed:?}",
            rep.statistic, rep.dof, rep.p_value
        ),
    );
}

#[test]
fn acceptance_c05_thermodynamic_limit() {
    let start = Instant::now();
    let spec = EnergySpec::new(vec![0.0, 0.0, 0.0], 1.0);
    let mut tvs = Vec::new();
    for n in 3..=10 {
        tvs.push(
            enumerate_gibbs_marginal(&spec, n, 1, 5_000_000)
                .unwrap()
                .total_variation,
        );
    }
    let exact = (tvs[0] - 1.0 / 6.0).abs() <= 1e-12;
    let monotone = tvs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let elapsed = start.elapsed();
    let pass = exact && monotone && elapsed.as_secs_f64() < 60.0;
    report(
        "5 (thermodynamic limit)",
        pass,
        &format!("TV series {tvs:.4?}, elapsed {elapsed:?}"),
    );
}

#[test]
fn acceptance_c06_flow_axioms() {
    let start = Instant::now();
    let dist = uniform();
    let mut worst = 0.0f64;
    let mut identity_exact = true;
    for rep in 0..100u64 {
        let mut rng = derive_stream(106, "acceptance-flow", rep);
        let chain = sample_chain_from(Generation::initial(2).unwrap(), &dist, 50, &mut rng);
        let flow = RescaledFlow::new(embed(&chain), 50, dist.mu).unwrap();
        use rand::Rng;
        let mut ts = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ident = flow.graph(ts[1], ts[1]).unwrap();
        identity_exact &=
            ident.rho(&MonotoneGraph::identity(flow.profile(ts[1]).unwrap())) == 0.0;
        let direct = flow.graph(ts[0], ts[2]).unwrap();
        let composed = compose(
            &flow.graph(ts[1], ts[2]).unwrap(),
            &flow.graph(ts[0], ts[1]).unwrap(),
        )
        .unwrap();
        worst = worst.max(direct.rho(&composed));
    }
    let elapsed = start.elapsed();
    let pass = identity_exact && worst < 1e-9 && elapsed.as_secs_f64() < 60.0;
    report(
        "6 (flow axioms on embedded trees)",
        pass,
        &format!(
            "identity exact: {identity_exact}, worst cocycle residual {worst:.2e}, \
             elapsed {elapsed:?}"
        ),
    );
}

#[test]
fn acceptance_c07_profile_diffusion_mean() {
    let start = Instant::now();
    use rayon::prelude::*;
    let config = DiffusionConfig::new(1e-4, 1.0).unwrap();
    let finals: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(107, "acceptance-z", r);
            *simulate_z(0.0, &config, &mut rng).unwrap().last().unwrap()
        })
        .collect();
    let m = mean(&finals);
    let se = standard_error(&finals);
    let elapsed = start.elapsed();
    let pass = (m - 1.0).abs() < 3.0 * se && elapsed.as_secs_f64() < 120.0;
    report(
        "7 (profile diffusion mean)",
        pass,
        &format!("mean Z(1) = {m:.5} (se {se:.5}), elapsed {elapsed:?}"),
    );
}

#[test]
fn acceptance_c08_flow_vs_limit_system() {
    let start = Instant::now();
    let cuts = [0.25, 0.5, 0.75, 1.0];
    let ts = [0.25, 0.5, 1.0];
    let replicas = 10_000;
    let dt = 1e-3;
    let spde = spde_marginals(&cuts, 1.0, &ts, replicas, dt, 1.0 / 128.0, 108).unwrap();
    let sde = sde_marginals(&cuts, 1.0, &ts, replicas, dt, 1081).unwrap();
    let mut all_pass = true;
    let mut min_p = 1.0f64;
    for (k, &cut) in cuts.iter().enumerate() {
        for (ti, &t) in ts.iter().enumerate() {
            let rep = ks_two_sample(
                &format!("x={cut}, t={t}"),
                &spde[k][ti],
                &sde[k][ti],
                0.001,
            )
            .unwrap();
            println!(
                "criterion 8 cell x={cut} t={t}: D = {:.5}, p = {:.5}",
                rep.statistic, rep.p_value
            );
            all_pass &= rep.pass;
            min_p = min_p.min(rep.p_value);
        }
    }
    let elapsed = start.elapsed();
    let pass = all_pass && elapsed.as_secs_f64() < 600.0;
    report(
        "8 (flow vs limit system)",
        pass,
        &format!("12 cells, min p = {min_p:.5}, elapsed {elapsed:?}"),
    );
}

#[test]
fn acceptance_c09_shocks_and_q_growth() {
    let start = Instant::now();
    let replicas = 100u64;
    let mut with_shocks = 0usize;
    let mut residuals = Vec::with_capacity(replicas as usize);
    let mut corrected = Vec::with_capacity(replicas as usize);
    for r in 0..replicas {
        let seed = derive_seed(109, "acceptance-shocks", r);
        let mut sheet = BrownianSheet::new(SheetConfig::new(1e-3, 1.0 / 128.0).unwrap(), seed);
        let sol = solve_flow(&mut sheet, 1.0, 0.0, 1.0, 10).unwrap();
        let (shocks, q) = sol.shocks(0.0, 1.0).unwrap();
        if !shocks.is_empty() && q > 0.0 {
            with_shocks += 1;
        }
        let growth = q_growth_check(&sol, &[1.0]).unwrap();
        residuals.push(growth.rows[0].1);
        corrected.push(growth.rows[0].2);
    }
    let shock_fraction = with_shocks as f64 / replicas as f64;
    let med = median(&residuals);
    let med_corrected = median(&corrected);
    let elapsed = start.elapsed();
    println!(
        "criterion 9 detail: shock fraction {shock_fraction:.2}, median growth residual \
         {med:.4}, median martingale-corrected residual {med_corrected:.4}"
    );
    let pass = shock_fraction >= 0.99 && med < 0.05 && elapsed.as_secs_f64() < 600.0;
    report(
        "9 (shocks and jump-mass growth)",
        pass,
        &format!(
            "shocks in {with_shocks}/{replicas} replicas, median relative residual of \
             Q(t) = 2 int Q/Z + int Z is {med:.4} (martingale-corrected bookkeeping \
             residual {med_corrected:.4}), elapsed {elapsed:?}"
        ),
    );
}

#[test]
fn acceptance_c10_convergence_to_flow() {
    let start = Instant::now();
    let dist = uniform();
    let cuts = [0.25, 0.5, 0.75, 1.0];
    let cells: [(f64, f64); 4] = [(0.5, 0.25), (0.5, 0.5), (1.0, 0.25), (1.0, 0.5)];
    let ts = [0.25, 0.5];
    let replicas = 10_000;
    let spde = spde_marginals(&cuts, 1.0, &ts, replicas, 1e-3, 1.0 / 128.0, 110).unwrap();
    let mut distances: std::collections::HashMap<(usize, usize, usize), (f64, bool)> =
        std::collections::HashMap::new();
    for (ni, &n) in [20usize, 2000].iter().enumerate() {
        let tree = tree_marginals(&dist, n, &cuts, 1.0, &ts, replicas, 1100 + n as u64).unwrap();
        for (ci, &(cut, t)) in cells.iter().enumerate() {
            let k = cuts.iter().position(|&c| c == cut).unwrap();
            let ti = ts.iter().position(|&x| x == t).unwrap();
            let rep = ks_two_sample(
                &format!("n={n}, x={cut}, t={t}"),
                &tree[k][ti],
                &spde[k][ti],
                0.001,
            )
            .unwrap();
            println!(
                "criterion 10 cell n={n} x={cut} t={t}: D = {:.5}, p = {:.6}",
                rep.statistic, rep.p_value
            );
            distances.insert((ni, ci, 0), (rep.statistic, rep.pass));
        }
    }
    let mut improved = 0;
    let mut large_all_pass = true;
    for ci in 0..cells.len() {
        let (d_small, _) = distances[&(0, ci, 0)];
        let (d_large, pass_large) = distances[&(1, ci, 0)];
        if d_small > d_large {
            improved += 1;
        }
        large_all_pass &= pass_large;
    }
    let elapsed = start.elapsed();
    let pass = improved >= 3 && large_all_pass && elapsed.as_secs_f64() < 1800.0;
    report(
        "10 (convergence to the flow, finite-dimensional proxy)",
        pass,
        &format!(
            "KS distance decreased in {improved}/4 cells from n=20 to n=2000, all n=2000 \
             cells pass at level 0.001, elapsed {elapsed:?}"
        ),
    );
}

#[test]
fn acceptance_c11_holder_battery() {
    let start = Instant::now();
    // Admissible parameters: with eighth moments, any 1/4 < gamma < beta < 3/8
    // and 0 < alpha < 8 gamma - 2 works; the report is descriptive.
    let beta = 0.37;
    let alpha = 0.35;
    let seed = derive_seed(111, "acceptance-holder", 0);
    let mut sheet = BrownianSheet::new(SheetConfig::new(1e-3, 1.0 / 128.0).unwrap(), seed);
    let sol = solve_flow(&mut sheet, 1.0, 0.0, 1.0, 10).unwrap();
    let reports: Vec<_> = (2..=6)
        .map(|m| estimate_holder(&sol, m, beta, alpha, 257).unwrap())
        .collect();
    for r in &reports {
        println!(
            "criterion 11 level m={}: {} grid points, sup H_beta = {:.4}, profile H_beta = {:.4}, sup Z = {:.4}",
            r.m, r.points, r.sup_trajectory, r.profile_holder, r.profile_sup
        );
    }
    let (b, gamma) = fit_envelope(&reports);
    println!(
        "criterion 11 envelope: sup_m <= {b:.4} * 2^({gamma:.4} m); gamma < 3/8 is {}",
        gamma < 0.375
    );
    let finite = reports
        .iter()
        .all(|r| r.sup_trajectory.is_finite() && r.profile_holder.is_finite())
        && b.is_finite()
        && gamma.is_finite();
    let elapsed = start.elapsed();
    let pass = finite && elapsed.as_secs_f64() < 600.0;
    report(
        "11 (Hoelder battery, descriptive)",
        pass,
        &format!("envelope b = {b:.4}, gamma = {gamma:.4}, elapsed {elapsed:?}"),
    );
}
