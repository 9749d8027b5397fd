use ndarray::Array2;

use super::graph::{Graph, NodeId};
use super::params::ParamStore;
use crate::error::Result;

/// Differences below this are treated as agreement regardless of scale.
const ABS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(block name, max relative error)` in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    /// Largest raw difference, floor or not.
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff < ABS_FLOOR {
        0.0
    } else {
        diff / a.abs().max(n.abs()).max(1e-12)
    }
}

/// Compares supplied analytic gradients against central differences of `f`.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    analytic: &[Array2<f64>],
    mut f: F,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut per_param = Vec::with_capacity(store.len());
    let mut max_abs_error = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for (id, grad) in ids.into_iter().zip(analytic) {
        let mut worst = 0.0f64;
        let n = store.value(id).len();
        for i in 0..n {
            let orig = store.value(id).as_slice_memory_order().map(|s| s[i]).unwrap_or(0.0);
            set_flat(store, id, i, orig + step);
            let plus = f(store)?;
            set_flat(store, id, i, orig - step);
            let minus = f(store)?;
            set_flat(store, id, i, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.as_slice_memory_order().map(|s| s[i]).unwrap_or(f64::NAN);
            worst = worst.max(rel_error(a, numeric));
            max_abs_error = max_abs_error.max((a - numeric).abs());
        }
        per_param.push((store.block(id).name.clone(), worst));
    }
    let max_rel_error = per_param.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport { per_param, max_rel_error, max_abs_error, tolerance, passed: max_rel_error < tolerance })
}

fn set_flat(store: &mut ParamStore, id: super::params::ParamId, i: usize, v: f64) {
    if let Some(s) = store.value_mut(id).as_slice_memory_order_mut() {
        s[i] = v;
    }
}

/// Runs `build` once for analytic gradients, then checks them by central
/// differences. `build` must record a `1 x 1` output over `store`.
pub fn grad_check<F>(store: &mut ParamStore, mut build: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Graph, NodeId)>,
{
    let mut probe = store.clone();
    probe.zero_grad();
    let (g, out) = build(&probe)?;
    g.backprop_scalar(out, &mut probe)?;
    let analytic: Vec<_> = probe.blocks().iter().map(|b| b.grad.clone()).collect();
    check_gradients(
        store,
        &analytic,
        |s| {
            let (g, out) = build(s)?;
            Ok(g.scalar(out))
        },
        step,
        tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Activation, GruCell, LayoutBuilder, Mlp, RecurrentCore};
    use crate::nn::params::{init_params, InitScheme};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.5, -2.0, 0.25]]);
        let report = grad_check(
            &mut store,
            |s| {
                let mut g = Graph::new();
                let x = g.input(array![[1.0, 2.0, 3.0]]);
                let p = g.param(s, w);
                let y = g.matmul_t(x, p)?;
                Ok((g, y))
            },
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn tanh_chain() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.3, -0.7], [0.9, 0.1]]);
        let report = grad_check(
            &mut store,
            |s| {
                let mut g = Graph::new();
                let x = g.input(array![[0.5, -1.0]]);
                let p = g.param(s, w);
                let a = g.matmul_t(x, p)?;
                let a = g.tanh(a);
                let b = g.matmul_t(a, p)?;
                let b = g.tanh(b);
                let b = g.sum_cols(b);
                Ok((g, b))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[2.0]]);
        let f = |s: &ParamStore| Ok(s.value(w)[[0, 0]].powi(2));
        let good = check_gradients(&mut store, &[array![[4.0]]], f, 1e-5, 1e-4).unwrap();
        assert!(good.passed);
        let bad = check_gradients(&mut store, &[array![[4.4]]], f, 1e-5, 1e-4).unwrap();
        assert!(!bad.passed);
        assert!(bad.max_rel_error > 0.05);
    }

    #[test]
    fn gru_mlp_composite_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layout = LayoutBuilder::default();
            let core = RecurrentCore::Gru(GruCell::declare(&mut layout, "gru", 3, 4));
            let head = Mlp::declare(&mut layout, "head", &[4, 5, 2], Activation::Relu);
            let mut store = init_params(&layout.specs, InitScheme::UniformFanin, &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
            let report = grad_check(
                &mut store,
                |s| {
                    let mut g = Graph::new();
                    let xi = g.input(Array2::from_shape_vec((2, 3), x.clone()).unwrap());
                    let hi = g.input(Array2::from_shape_vec((2, 4), h.clone()).unwrap());
                    let hn = core.forward(&mut g, s, xi, hi)?;
                    let y = head.forward(&mut g, s, hn)?;
                    let y = g.square(y);
                    let y = g.mean(y);
                    Ok((g, y))
                },
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(report.passed, "seed {seed}: {report:?}");
        }
    }
}
