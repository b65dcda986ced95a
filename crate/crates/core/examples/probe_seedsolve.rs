use hglue_core::{seed::{self, SeedFamily}, ops, elliptic::*, grid::*, tensor, pipeline};
use hglue_core::grid::ScalarField;
fn main() {
    let fam = SeedFamily::Perturbed { amplitude: 0.02 };
    let grid = seed::seed_grid(10, 8, 17, 1, 4).unwrap();
    let cand = seed::seed_candidate(fam, &grid).unwrap();
    let w_jet = |t: f64, b: f64, _p: f64| seed::rho_seed_jet(t, b);
    let gauge = SolveGauge { grid: grid.clone(), gbar: &cand.gbar_a, w_jet: &w_jet, t_dirichlet: true };
    let div_cov = ops::div_conformal_quotient(&cand.gbar_a, &w_jet, &cand.mu_bar).unwrap();
    let (nt, nb, _np) = grid.shape();
    let mut rhs: Vec<Vec<f64>> = vec![vec![0.0; nt * nb]; 2];
    for idx in 0..grid.len() {
        let (i, j, _k) = grid.unidx(idx);
        let (t, b, _) = grid.coords(i, j, 0);
        let rho = seed::rho_seed_value(t, b);
        let gi = cand.gbar_a.ginv_at(idx);
        let dv = [div_cov.comps[0][idx], div_cov.comps[1][idx], div_cov.comps[2][idx]];
        let sharp = tensor::raise(&gi, &dv);
        rhs[0][i * nb + j] = rho * rho * sharp[0];
        rhs[1][i * nb + j] = rho * rho * sharp[1];
    }
    let apply = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let comps: [Vec<f64>; 3] = [basis[0].clone(), basis[1].clone(), vec![0.0; basis[0].len()]];
        let out = gauge.apply_vector_laplacian(&comps);
        vec![out[0].clone(), out[1].clone()]
    };
    let (op, _) = assemble_operator(&gauge, 2, apply, 12, 14).unwrap();
    let rhs_flat: Vec<f64> = {
        let mut out = vec![0.0; nt*nb*2];
        for i in 0..nt { for j in 0..nb { for c in 0..2 { out[(i*nb+j)*2+c] = rhs[c][i*nb+j]; }}}
        out
    };
    let sol = op.solve(&rhs_flat);
    let mut w_field = VectorField::zeros(&grid);
    for i in 0..nt { for j in 0..nb {
        w_field.comps[0][grid.idx(i, j, 0)] = sol[(i*nb+j)*2];
        w_field.comps[1][grid.idx(i, j, 0)] = sol[(i*nb+j)*2+1];
    }}
    println!("W sup = {:.3e}", w_field.sup_norm());
    let tbar = ops::conformal_killing_field(&cand.gbar_a, &w_field).unwrap();
    let rho_field = ScalarField::from_fn(&grid, |t, b, _| seed::rho_seed_value(t, b));
    let quo = ops::boundary_quotient_sym(&tbar, &rho_field);
    let mut sigma_bar = cand.mu_bar.clone();
    for c in 0..6 { for idx in 0..grid.len() { sigma_bar.comps[c][idx] += quo.comps[c][idx]; } }
    let r_plus6 = seed::seed_r_plus6(fam, &grid).unwrap();
    let r_lambda = ScalarField { grid: grid.clone(), data: r_plus6.data.iter().map(|v| v - 6.0).collect() };
    let mut sigma2 = ScalarField::zeros(&grid);
    for idx in 0..grid.len() {
        let gi = cand.gbar_a.ginv_at(idx);
        let rho = rho_field.data[idx];
        sigma2.data[idx] = rho * rho * tensor::norm2_sym(&gi, &sigma_bar.at(idx));
    }
    let weight = |t: f64, b: f64| seed::rho_seed_value(t, b).max(1e-6);
    let prob = LichProblem { grid: grid.clone(), gbar: &cand.gbar_a, w_jet: &w_jet,
        r_lambda, sigma2, weight: &weight, t_dirichlet: true };
    let g2 = prob.gauge();
    let mut u = vec![0.0; grid.len()];
    let theta = vec![1.0; grid.len()];
    let coeff = prob.linear_coefficient(&theta);
    let apply_p = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let lap = g2.apply_scalar_laplacian(&basis[0]);
        vec![(0..lap.len()).map(|i| lap[i] + coeff[i] * basis[0][i]).collect()]
    };
    let (opp, _) = assemble_operator(&g2, 1, apply_p, 12, 14).unwrap();
    for it in 0..12 {
        let phi: Vec<f64> = (0..grid.len()).map(|i| 1.0 + u[i]).collect();
        let resid = prob.residual(&g2, &phi).unwrap();
        let wres = prob.weighted_residual_sup(&resid);
        // where is the weighted sup attained?
        let mut loc = (0usize, 0usize); let mut best = 0.0;
        for idx in 0..grid.len() {
            let (i, j, _) = grid.unidx(idx);
            if j == 0 { continue; }
            let (t, b, _) = grid.coords(i, j, 0);
            let w = weight(t, b);
            let v = resid[idx].abs() / (w*w);
            if v > best { best = v; loc = (i, j); }
        }
        let (t, b, _) = grid.coords(loc.0, loc.1, 0);
        println!("iter {it}: wres {wres:.3e} at t={t:.2} b={b:.2} rho={:.2e}", seed::rho_seed_value(t, b));
        let delta = opp.solve(&resid);
        for i in 0..u.len() { u[i] -= delta[i]; }
    }
    let _ = pipeline::NORM_K;
}
