//! Alternating-chain certificates between two plans with equal marginals.
//!
//! Given plans `gamma`, `gamma_prime` with the same marginals and a sub-plan
//! `gamma0 <= gamma`, a chain starts with an entry `(x0, y0)` of `gamma0`,
//! leaves `x0` along `gamma_prime` and keeps alternating: each time the
//! `gamma_prime` step lands on a target atom outside the support of
//! `pi_2 gamma0` it is answered by a `gamma - gamma0` entry into that atom,
//! until a `gamma_prime` step lands inside that support. Moving `eps` along
//! such a chain yields the sub-plans of a [`ChainCertificate`].

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{TransportPlan, MARGINAL_TOL};

/// A chain found by the search: `x[0] -> y[1] <- x[1] -> ... <- x[n] -> end`,
/// starting from the `gamma0` entry `(x[0], start_target)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub start_target: usize,
    /// Source atoms `x_0, ..., x_N`.
    pub sources: Vec<usize>,
    /// Intermediate target atoms `y_1, ..., y_N` (outside `spt nu0`).
    pub middles: Vec<usize>,
    /// Final target atom (inside `spt nu0`).
    pub end_target: usize,
    /// Largest `eps` for which this chain yields a certificate.
    pub eps_bar: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.middles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.middles.is_empty()
    }
}

/// Sub-plans and measures satisfying the chain system. Measures are weight
/// vectors on the atom registries of the input plans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCertificate {
    pub n: usize,
    pub eps: f64,
    pub gamma_tilde: TransportPlan,
    pub gamma_tilde_prime: TransportPlan,
    pub gamma_tilde_zero: TransportPlan,
    pub gamma_tilde_inf: TransportPlan,
    pub mu_tilde: Vec<f64>,
    pub nu_tilde: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub nu_a: Vec<f64>,
    pub nu_b: Vec<f64>,
    pub chain: Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub eps: f64,
    /// Largest `eps_bar` over the chains found; any `eps` up to it succeeds.
    pub max_feasible_eps: Option<f64>,
    pub chains_tried: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ChainOutcome {
    Certificate(Box<ChainCertificate>),
    Failure(ChainFailure),
}

impl ChainOutcome {
    pub fn certificate(&self) -> Option<&ChainCertificate> {
        match self {
            ChainOutcome::Certificate(c) => Some(c),
            ChainOutcome::Failure(_) => None,
        }
    }
}

struct Inputs<'a> {
    gamma: &'a TransportPlan,
    gamma_prime: &'a TransportPlan,
    gamma0: &'a TransportPlan,
}

fn validate(inputs: &Inputs<'_>) -> Result<()> {
    let Inputs {
        gamma,
        gamma_prime,
        gamma0,
    } = inputs;
    if gamma.is_partial() || gamma_prime.is_partial() {
        return Err(Error::InvalidPlan(
            "gamma and gamma' must be full plans".into(),
        ));
    }
    if !gamma.same_registries(gamma_prime) || !gamma.same_registries(gamma0) {
        return Err(Error::InvalidPlan(
            "plans must share their atom registries".into(),
        ));
    }
    if gamma0.is_empty() {
        return Err(Error::InvalidPlan("gamma0 must be non-zero".into()));
    }
    let tol = MARGINAL_TOL * gamma.total_mass();
    if !gamma.dominates(gamma0, tol) {
        return Err(Error::InvalidPlan(
            "gamma0 is not dominated by gamma".into(),
        ));
    }
    Ok(())
}

/// Breadth-first alternating-chain search, lowest index first.
///
/// Chains are tried from every entry of `gamma0` in index order; the first
/// chain whose `eps_bar` admits `eps` yields the certificate.
pub fn chain_decompose(
    gamma: &TransportPlan,
    gamma_prime: &TransportPlan,
    gamma0: &TransportPlan,
    eps: f64,
) -> Result<ChainOutcome> {
    let inputs = Inputs {
        gamma,
        gamma_prime,
        gamma0,
    };
    validate(&inputs)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidPlan(format!(
            "eps must be positive, got {eps}"
        )));
    }

    let n_src = gamma.source().len();
    let n_tgt = gamma.target().len();
    let (_, nu0) = gamma0.marginals();

    // gamma' adjacency by source, gamma - gamma0 adjacency by target.
    let mut prime_out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_src];
    for e in gamma_prime.entries() {
        prime_out[e.i].push((e.j, e.mass));
    }
    let mut rest_in: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_tgt];
    for e in gamma.entries() {
        let rest = e.mass - gamma0.mass(e.i, e.j);
        if rest > 0.0 {
            rest_in[e.j].push((e.i, rest));
        }
    }
    let max_len = 2 * (n_src + n_tgt);

    let mut best: Option<f64> = None;
    let mut tried = 0;
    for start in gamma0.entries() {
        let Some(chain) = search(
            start.i, start.j, start.mass, &nu0, &prime_out, &rest_in, max_len,
        ) else {
            continue;
        };
        tried += 1;
        if eps <= chain.eps_bar {
            return Ok(ChainOutcome::Certificate(Box::new(build(
                &inputs, chain, eps,
            )?)));
        }
        best = Some(best.map_or(chain.eps_bar, |b: f64| b.max(chain.eps_bar)));
    }
    Ok(ChainOutcome::Failure(ChainFailure {
        eps,
        max_feasible_eps: best,
        chains_tried: tried,
    }))
}

fn search(
    x0: usize,
    y0: usize,
    start_mass: f64,
    nu0: &[f64],
    prime_out: &[Vec<(usize, f64)>],
    rest_in: &[Vec<(usize, f64)>],
    max_len: usize,
) -> Option<Chain> {
    let n_src = prime_out.len();
    let n_tgt = rest_in.len();
    // parent_of_x[x] = y through which x was reached; parent_of_y[y] = x.
    let mut parent_of_x: Vec<Option<usize>> = vec![None; n_src];
    let mut parent_of_y: Vec<Option<usize>> = vec![None; n_tgt];
    let mut depth = vec![0usize; n_src];
    let mut seen_x = vec![false; n_src];
    seen_x[x0] = true;
    let mut queue = VecDeque::from([x0]);
    while let Some(x) = queue.pop_front() {
        if depth[x] > max_len {
            break;
        }
        for &(y, _) in &prime_out[x] {
            if nu0[y] > 0.0 {
                return Some(unwind(
                    x0,
                    y0,
                    start_mass,
                    x,
                    y,
                    nu0,
                    &parent_of_x,
                    &parent_of_y,
                    prime_out,
                    rest_in,
                ));
            }
            if parent_of_y[y].is_some() {
                continue;
            }
            parent_of_y[y] = Some(x);
            for &(x_next, _) in &rest_in[y] {
                if !seen_x[x_next] {
                    seen_x[x_next] = true;
                    parent_of_x[x_next] = Some(y);
                    depth[x_next] = depth[x] + 1;
                    queue.push_back(x_next);
                }
            }
        }
    }
    None
}

fn lookup(list: &[(usize, f64)], key: usize) -> f64 {
    list.iter()
        .find(|&&(k, _)| k == key)
        .map_or(0.0, |&(_, m)| m)
}

#[allow(clippy::too_many_arguments)]
fn unwind(
    x0: usize,
    y0: usize,
    start_mass: f64,
    last_x: usize,
    end: usize,
    nu0: &[f64],
    parent_of_x: &[Option<usize>],
    parent_of_y: &[Option<usize>],
    prime_out: &[Vec<(usize, f64)>],
    rest_in: &[Vec<(usize, f64)>],
) -> Chain {
    let mut sources = vec![last_x];
    let mut middles = Vec::new();
    let mut x = last_x;
    while x != x0 {
        let y = parent_of_x[x].expect("reached x has a parent");
        middles.push(y);
        x = parent_of_y[y].expect("reached y has a parent");
        sources.push(x);
    }
    sources.reverse();
    middles.reverse();

    let mut cap = start_mass.min(nu0[y0]).min(nu0[end]);
    for (k, &x) in sources.iter().enumerate() {
        let y_next = if k < middles.len() { middles[k] } else { end };
        cap = cap.min(lookup(&prime_out[x], y_next));
        if k > 0 {
            cap = cap.min(lookup(&rest_in[middles[k - 1]], x));
        }
    }
    let n = middles.len();
    Chain {
        start_target: y0,
        sources,
        middles,
        end_target: end,
        eps_bar: cap / (n + 1) as f64,
    }
}

fn build(inputs: &Inputs<'_>, chain: Chain, eps: f64) -> Result<ChainCertificate> {
    let gamma = inputs.gamma;
    let src = gamma.source().clone();
    let tgt = gamma.target().clone();
    let (n_src, n_tgt) = (src.len(), tgt.len());
    let n = chain.len();
    let x = &chain.sources;
    let y = &chain.middles;

    let zero = vec![(x[0], chain.start_target, eps)];
    let inf: Vec<_> = (1..=n).map(|k| (x[k], y[k - 1], eps)).collect();
    let prime: Vec<_> = (0..=n)
        .map(|k| (x[k], if k < n { y[k] } else { chain.end_target }, eps))
        .collect();

    let plan = |entries: Vec<(usize, usize, f64)>| {
        TransportPlan::accumulate(Arc::clone(&src), Arc::clone(&tgt), entries, true)
    };
    let gamma_tilde_zero = plan(zero.clone())?;
    let gamma_tilde_inf = plan(inf.clone())?;
    let gamma_tilde = plan(zero.into_iter().chain(inf).collect())?;
    let gamma_tilde_prime = plan(prime)?;

    let mut mu_tilde = vec![0.0; n_src];
    let mut nu_tilde = vec![0.0; n_tgt];
    for k in 1..=n {
        mu_tilde[x[k]] += eps;
        nu_tilde[y[k - 1]] += eps;
    }
    let mut mu_a = vec![0.0; n_src];
    mu_a[x[0]] = eps;
    let mut nu_a = vec![0.0; n_tgt];
    nu_a[chain.start_target] = eps;
    let mut nu_b = vec![0.0; n_tgt];
    nu_b[chain.end_target] = eps;

    Ok(ChainCertificate {
        n,
        eps,
        gamma_tilde,
        gamma_tilde_prime,
        gamma_tilde_zero,
        gamma_tilde_inf,
        mu_tilde,
        nu_tilde,
        mu_a,
        nu_a,
        nu_b,
        chain,
    })
}

/// Checks every relation of the chain system, returning the list of
/// violated relations (empty when the certificate is valid).
///
/// Independent of the search: it only reads the certificate and the inputs.
pub fn check_certificate(
    gamma: &TransportPlan,
    gamma_prime: &TransportPlan,
    gamma0: &TransportPlan,
    cert: &ChainCertificate,
    tol: f64,
) -> Vec<String> {
    let mut bad = Vec::new();
    let mut require = |ok: bool, what: &str| {
        if !ok {
            bad.push(what.to_string());
        }
    };
    let le =
        |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| *x <= *y + tol);
    let eq = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    };
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    let sum = |a: &[f64]| a.iter().sum::<f64>();
    let nonneg = |a: &[f64]| a.iter().all(|&x| x >= 0.0);

    let mu = gamma.source().weights();
    let (mu0, nu0) = gamma0.marginals();
    let mu_minus_mu0: Vec<f64> = mu.iter().zip(&mu0).map(|(a, b)| a - b).collect();

    let plans = [
        &cert.gamma_tilde,
        &cert.gamma_tilde_prime,
        &cert.gamma_tilde_zero,
        &cert.gamma_tilde_inf,
    ];
    require(
        plans.iter().all(|p| p.same_registries(gamma)),
        "sub-plans share the atom registries",
    );
    require(gamma.dominates(&cert.gamma_tilde, tol), "gamma~ <= gamma");
    require(
        gamma_prime.dominates(&cert.gamma_tilde_prime, tol),
        "gamma~' <= gamma'",
    );

    let measures = [
        &cert.mu_tilde,
        &cert.nu_tilde,
        &cert.mu_a,
        &cert.nu_a,
        &cert.nu_b,
    ];
    require(
        measures.iter().all(|m| nonneg(m)),
        "measures are nonnegative",
    );

    let (g1, g2) = cert.gamma_tilde.marginals();
    let (gp1, gp2) = cert.gamma_tilde_prime.marginals();
    let mu_side = add(&cert.mu_tilde, &cert.mu_a);
    require(eq(&g1, &mu_side), "pi1 gamma~ = mu~ + mu_A");
    require(eq(&gp1, &mu_side), "pi1 gamma~' = mu~ + mu_A");
    require(
        eq(&g2, &add(&cert.nu_tilde, &cert.nu_a)),
        "pi2 gamma~ = nu~ + nu_A",
    );
    require(
        eq(&gp2, &add(&cert.nu_tilde, &cert.nu_b)),
        "pi2 gamma~' = nu~ + nu_B",
    );

    require(le(&cert.mu_a, &mu0), "mu_A <= mu0");
    require(le(&cert.mu_tilde, &mu_minus_mu0), "mu~ <= mu - mu0");
    require(le(&cert.nu_a, &nu0), "nu_A <= nu0");
    require(le(&cert.nu_b, &nu0), "nu_B <= nu0");
    require(
        cert.nu_tilde
            .iter()
            .zip(&nu0)
            .all(|(&a, &b)| a == 0.0 || b == 0.0),
        "nu~ and nu0 are mutually singular",
    );

    let n = cert.n as f64;
    let eps = cert.eps;
    require(eps > 0.0, "eps > 0");
    require(
        (cert.gamma_tilde.total_mass() - (n + 1.0) * eps).abs() <= tol,
        "|gamma~| = (N+1) eps",
    );
    require(
        (cert.gamma_tilde_prime.total_mass() - (n + 1.0) * eps).abs() <= tol,
        "|gamma~'| = (N+1) eps",
    );
    require(
        (sum(&cert.mu_tilde) - n * eps).abs() <= tol,
        "|mu~| = N eps",
    );
    require(
        (sum(&cert.nu_tilde) - n * eps).abs() <= tol,
        "|nu~| = N eps",
    );
    for (m, name) in [
        (&cert.mu_a, "|mu_A| = eps"),
        (&cert.nu_a, "|nu_A| = eps"),
        (&cert.nu_b, "|nu_B| = eps"),
    ] {
        require((sum(m) - eps).abs() <= tol, name);
    }

    // gamma~ = gamma~_0 + gamma~_inf
    let split_ok = cert.gamma_tilde.entries().iter().all(|e| {
        (e.mass - cert.gamma_tilde_zero.mass(e.i, e.j) - cert.gamma_tilde_inf.mass(e.i, e.j)).abs()
            <= tol
    }) && cert
        .gamma_tilde_zero
        .entries()
        .iter()
        .chain(cert.gamma_tilde_inf.entries())
        .all(|e| cert.gamma_tilde.mass(e.i, e.j) > 0.0);
    require(split_ok, "gamma~ = gamma~_0 + gamma~_inf");
    require(
        gamma0.dominates(&cert.gamma_tilde_zero, tol),
        "gamma~_0 <= gamma0",
    );
    let inf_ok = cert
        .gamma_tilde_inf
        .entries()
        .iter()
        .all(|e| e.mass <= gamma.mass(e.i, e.j) - gamma0.mass(e.i, e.j) + tol);
    require(inf_ok, "gamma~_inf <= gamma - gamma0");
    let (z1, z2) = cert.gamma_tilde_zero.marginals();
    let (i1, i2) = cert.gamma_tilde_inf.marginals();
    require(eq(&z1, &cert.mu_a), "pi1 gamma~_0 = mu_A");
    require(eq(&z2, &cert.nu_a), "pi2 gamma~_0 = nu_A");
    require(eq(&i1, &cert.mu_tilde), "pi1 gamma~_inf = mu~");
    require(eq(&i2, &cert.nu_tilde), "pi2 gamma~_inf = nu~");
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DiscreteMeasure;

    fn pts(points: &[f64]) -> Arc<DiscreteMeasure> {
        Arc::new(DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect(), 1.0).unwrap())
    }

    #[test]
    fn identical_plans_close_immediately() {
        let mu = pts(&[0.0, 1.0, 2.0]);
        let nu = pts(&[5.0, 6.0, 7.0]);
        let gamma = TransportPlan::new(
            mu,
            nu,
            [(0, 1, 1.0 / 3.0), (1, 2, 1.0 / 3.0), (2, 0, 1.0 / 3.0)],
            false,
        )
        .unwrap();
        let gamma0 = gamma.restrict_indices(|i, _| i == 1);
        let m = 1.0 / 3.0;
        let eps = 0.1;
        let out = chain_decompose(&gamma, &gamma, &gamma0, eps).unwrap();
        let cert = out.certificate().expect("certificate");
        assert_eq!(cert.n, 0);
        assert!(check_certificate(&gamma, &gamma, &gamma0, cert, 1e-9).is_empty());
        // gamma~ = gamma~' = gamma~_0 = eps * entry / m
        for p in [
            &cert.gamma_tilde,
            &cert.gamma_tilde_prime,
            &cert.gamma_tilde_zero,
        ] {
            assert_eq!(p.entries().len(), 1);
            let e = p.entries()[0];
            assert_eq!((e.i, e.j), (1, 2));
            assert!((e.mass - eps * m / m).abs() < 1e-15);
        }
        assert!(cert
            .mu_tilde
            .iter()
            .chain(&cert.nu_tilde)
            .all(|&v| v == 0.0));
        assert_eq!(cert.mu_a, vec![0.0, eps, 0.0]);
        assert_eq!(cert.nu_a, vec![0.0, 0.0, eps]);
        assert_eq!(cert.nu_b, vec![0.0, 0.0, eps]);
    }

    #[test]
    fn two_by_two_needs_one_step() {
        // a, b -> c, d ; gamma = {(a,c), (b,d)}, gamma' = {(a,d), (b,c)}
        let mu = pts(&[0.0, 1.0]);
        let nu = pts(&[2.0, 3.0]);
        let gamma =
            TransportPlan::new(mu.clone(), nu.clone(), [(0, 0, 0.5), (1, 1, 0.5)], false).unwrap();
        let gamma_p = TransportPlan::new(mu, nu, [(0, 1, 0.5), (1, 0, 0.5)], false).unwrap();
        let gamma0 = gamma.restrict_indices(|i, j| (i, j) == (0, 0));
        let out = chain_decompose(&gamma, &gamma_p, &gamma0, 0.1).unwrap();
        let cert = out.certificate().unwrap();
        assert_eq!(cert.n, 1);
        assert_eq!(cert.chain.sources, vec![0, 1]);
        assert_eq!(cert.chain.middles, vec![1]);
        assert_eq!(cert.chain.end_target, 0);
        assert_eq!(cert.chain.eps_bar, 0.25);
        assert!(check_certificate(&gamma, &gamma_p, &gamma0, cert, 1e-9).is_empty());

        let out = chain_decompose(&gamma, &gamma_p, &gamma0, 0.3).unwrap();
        let ChainOutcome::Failure(f) = out else {
            panic!("expected failure")
        };
        assert_eq!(f.max_feasible_eps, Some(0.25));
    }

    #[test]
    fn exhaustive_two_by_two_oracle() {
        // Enumerate every pair of sub-plans on the eps-lattice, derive the
        // measures they force, and keep those passing the full system.
        let eps: f64 = 0.1;
        let mu = pts(&[0.0, 1.0]);
        let nu = pts(&[2.0, 3.0]);
        let gamma =
            TransportPlan::new(mu.clone(), nu.clone(), [(0, 0, 0.5), (1, 1, 0.5)], false).unwrap();
        let gamma_p =
            TransportPlan::new(mu.clone(), nu.clone(), [(0, 1, 0.5), (1, 0, 0.5)], false).unwrap();
        let gamma0 = gamma.restrict_indices(|i, j| (i, j) == (0, 0));
        let sub = |entries: Vec<(usize, usize, f64)>| {
            TransportPlan::accumulate(mu.clone(), nu.clone(), entries, true).unwrap()
        };
        let lattice = [0.0, eps, 2.0 * eps, 3.0 * eps];
        let mut valid_n = Vec::new();
        for &ac in &lattice {
            for &bd in &lattice {
                for &ad in &lattice {
                    for &bc in &lattice {
                        let total = ac + bd;
                        if total == 0.0 {
                            continue;
                        }
                        let n = ((total / eps).round() as usize).saturating_sub(1);
                        let nu_tilde = vec![0.0, bd];
                        let cert = ChainCertificate {
                            n,
                            eps,
                            gamma_tilde: sub(vec![(0, 0, ac), (1, 1, bd)]),
                            gamma_tilde_prime: sub(vec![(0, 1, ad), (1, 0, bc)]),
                            gamma_tilde_zero: sub(vec![(0, 0, ac)]),
                            gamma_tilde_inf: sub(vec![(1, 1, bd)]),
                            mu_tilde: vec![0.0, bd],
                            nu_b: vec![bc, ad - nu_tilde[1]],
                            nu_tilde,
                            mu_a: vec![ac, 0.0],
                            nu_a: vec![ac, 0.0],
                            chain: Chain {
                                start_target: 0,
                                sources: vec![],
                                middles: vec![],
                                end_target: 0,
                                eps_bar: 0.0,
                            },
                        };
                        if check_certificate(&gamma, &gamma_p, &gamma0, &cert, 1e-12).is_empty() {
                            valid_n.push(n);
                        }
                    }
                }
            }
        }
        assert_eq!(valid_n, vec![1]);
        let found = chain_decompose(&gamma, &gamma_p, &gamma0, eps).unwrap();
        assert_eq!(found.certificate().unwrap().n, 1);
    }

    #[test]
    fn input_errors() {
        let mu = pts(&[0.0, 1.0]);
        let nu = pts(&[2.0, 3.0]);
        let gamma =
            TransportPlan::new(mu.clone(), nu.clone(), [(0, 0, 0.5), (1, 1, 0.5)], false).unwrap();
        let other =
            TransportPlan::new(mu.clone(), nu.clone(), [(0, 1, 0.5), (1, 0, 0.5)], false).unwrap();
        let too_big = TransportPlan::new(mu.clone(), nu.clone(), [(0, 1, 0.5)], true).unwrap();
        assert!(chain_decompose(&gamma, &other, &too_big, 0.1).is_err());
        let empty = gamma.restrict_indices(|_, _| false);
        assert!(chain_decompose(&gamma, &other, &empty, 0.1).is_err());
        let elsewhere = TransportPlan::identity(pts(&[0.0, 1.0]));
        let gamma0 = gamma.restrict_indices(|i, _| i == 0);
        assert!(chain_decompose(&gamma, &elsewhere, &gamma0, 0.1).is_err());
        assert!(chain_decompose(&gamma, &other, &gamma0, -1.0).is_err());
    }
}
