//! Central finite-difference checks of analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Mlp, MlpSpec};
use super::params::ParameterStore;
use crate::{Error, Result};

/// Magnitude below which gradients are compared absolutely rather than relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(entry name, flat index)` of the worst probe.
    pub worst_entry: (String, usize),
    pub probes: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Probes `probes` randomly chosen scalars of `params` and compares their stored
/// gradients against central differences of `eval`.
///
/// `eval` returns the objective together with the relu on/off pattern of the
/// pass; probes whose `±eps` perturbation changes the pattern straddle a kink
/// and are redrawn.
pub fn finite_difference_check<F>(
    params: &mut ParameterStore,
    probes: usize,
    eps: f64,
    rng: &mut impl Rng,
    mut eval: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore) -> Result<(f64, Vec<bool>)>,
{
    if probes == 0 {
        return Err(Error::Config("gradient check needs at least one probe".into()));
    }
    let total = params.num_scalars();
    if total == 0 {
        return Err(Error::Config("gradient check on an empty store".into()));
    }
    let (_, base_pattern) = eval(params)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_entry: (String::new(), 0),
        probes: 0,
    };
    let max_draws = probes * 50;
    let mut draws = 0;
    while report.probes < probes {
        draws += 1;
        if draws > max_draws {
            return Err(Error::Numerical(format!(
                "only {} of {probes} probes avoided relu kinks",
                report.probes
            )));
        }
        let (entry, offset) = locate(params, rng.random_range(0..total));
        let orig = params.value_at(entry, offset);
        params.set_value_at(entry, offset, orig + eps);
        let plus = eval(params);
        params.set_value_at(entry, offset, orig - eps);
        let minus = eval(params);
        params.set_value_at(entry, offset, orig);
        let (fp, pp) = plus?;
        let (fm, pm) = minus?;
        if pp != base_pattern || pm != base_pattern {
            continue;
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let analytic = params.entries()[entry].grads[offset];
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.probes == 0 {
            report.max_rel_error = err;
            report.worst_entry = (params.entries()[entry].name.clone(), offset);
        }
        report.probes += 1;
    }
    Ok(report)
}

fn locate(params: &ParameterStore, mut flat: usize) -> (usize, usize) {
    for (i, p) in params.entries().iter().enumerate() {
        if flat < p.len() {
            return (i, flat);
        }
        flat -= p.len();
    }
    unreachable!("flat index within num_scalars")
}

/// Gradient check of a prefix-free network on a random batch and a random
/// output projection, deterministic in `seed`.
pub fn grad_check(
    spec: &MlpSpec,
    params: &mut ParameterStore,
    probes: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let net = Mlp::new(spec.clone(), "")?;
    net.check_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 3;
    let x = Array2::from_shape_fn((batch, spec.input_dim), |_| rng.random_range(-1.0..1.0));
    let g = Array2::from_shape_fn((batch, spec.output_dim), |_| rng.random_range(-1.0..1.0));

    params.zero_grads();
    let (_, tape) = net.forward_recorded(params, x.view())?;
    net.backward(params, &tape, g.view())?;

    let report = finite_difference_check(params, probes, eps, &mut rng, |p| {
        let (y, tape) = net.forward_recorded(p, x.view())?;
        let mut pattern = Vec::new();
        net.kink_pattern(&tape, &mut pattern);
        Ok(((&y * &g).sum(), pattern))
    });
    params.zero_grads();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{HiddenActivation, OutputActivation};

    fn net_params(spec: &MlpSpec, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        Mlp::new(spec.clone(), "").unwrap().register(&mut store, &mut rng).unwrap();
        store
    }

    #[test]
    fn linear_net_is_exact() {
        let spec = MlpSpec::new(5, vec![], 3);
        let mut p = net_params(&spec, 1);
        let r = grad_check(&spec, &mut p, 50, 1e-5, 9).unwrap();
        assert_eq!(r.probes, 50);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn tanh_net_within_tolerance() {
        let spec = MlpSpec::new(4, vec![8, 6], 3)
            .with_hidden(HiddenActivation::Tanh)
            .with_output(OutputActivation::Tanh);
        let mut p = net_params(&spec, 2);
        let r = grad_check(&spec, &mut p, 100, 1e-5, 10).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn relu_net_away_from_kinks() {
        let spec = MlpSpec::new(6, vec![32, 32], 4).with_output(OutputActivation::Softmax);
        let mut p = net_params(&spec, 3);
        let r = grad_check(&spec, &mut p, 200, 1e-5, 11).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = MlpSpec::new(4, vec![5], 2);
        let mut p = net_params(&spec, 4);
        let a = grad_check(&spec, &mut p, 20, 1e-5, 5).unwrap();
        let b = grad_check(&spec, &mut p, 20, 1e-5, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn detects_wrong_gradients() {
        let spec = MlpSpec::new(3, vec![], 1);
        let net = Mlp::new(spec, "").unwrap();
        let mut p = net_params(net.spec(), 5);
        p.zero_grads();
        // Stored gradients are all zero while the true ones are not.
        let x = ndarray::array![[1.0, 2.0, 3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = finite_difference_check(&mut p, 10, 1e-5, &mut rng, |s| {
            Ok((net.forward_batch(s, x.view())?.sum(), vec![]))
        })
        .unwrap();
        assert!(r.max_rel_error > 0.5);
    }

    #[test]
    fn zero_probes_rejected() {
        let spec = MlpSpec::new(2, vec![], 1);
        let mut p = net_params(&spec, 6);
        assert!(grad_check(&spec, &mut p, 0, 1e-5, 0).is_err());
    }
}
