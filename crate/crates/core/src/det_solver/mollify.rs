use crate::hspace::HPath;

/// Quadrature nodes on `(-1, 1)` for the bump mollifier.
pub(crate) const MOLLIFIER_NODES: usize = 33;

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Composite Simpson weights times the bump, normalised to sum to one so
/// constants are reproduced exactly.
pub(crate) fn mollifier_weights() -> Vec<(f64, f64)> {
    let intervals = MOLLIFIER_NODES - 1;
    let h = 2.0 / intervals as f64;
    let mut nodes: Vec<(f64, f64)> = (0..MOLLIFIER_NODES)
        .map(|i| {
            let r = -1.0 + i as f64 * h;
            let simpson = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (r, simpson * bump(r))
        })
        .collect();
    let total: f64 = nodes.iter().map(|(_, w)| w).sum();
    for (_, w) in nodes.iter_mut() {
        *w /= total;
    }
    nodes
}

/// `M_n(t) = ∫ rho(r) M(t - (1 + r) / n) dr` with `M` held constant outside
/// `[0, T]`, evaluated on the path's own grid.
pub fn mollify(path: &HPath, n: f64) -> HPath {
    let weights = mollifier_weights();
    let dim = path.dim();
    let mut buf = vec![0.0; dim];
    HPath::from_fn(path.grid().clone(), dim, |t, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(r, w) in &weights {
            if w == 0.0 {
                continue;
            }
            path.value_at(t - (1.0 + r) / n, &mut buf);
            for i in 0..dim {
                out[i] += w * buf[i];
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hspace::{modulus_of_continuity, HSpace, NormKind, TimeGrid};
    use std::sync::Arc;

    #[test]
    fn constants_are_fixed_points() {
        let g = Arc::new(TimeGrid::uniform(1.0, 50).unwrap());
        let p = HPath::constant(g, &[2.5, -1.0]);
        let m = mollify(&p, 7.0);
        for k in 0..m.len() {
            assert!((m.node(k)[0] - 2.5).abs() < 1e-14);
            assert!((m.node(k)[1] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_path_is_delayed_by_one_over_n() {
        let g = Arc::new(TimeGrid::uniform(1.0, 100).unwrap());
        let p = HPath::from_fn(g, 1, |t, out| out[0] = t);
        let n = 10.0;
        let m = mollify(&p, n);
        for (k, &t) in m.times().iter().enumerate() {
            if t >= 2.0 / n {
                assert!((m.node(k)[0] - (t - 1.0 / n)).abs() < 1e-13, "t={t}");
            }
        }
        assert_eq!(m.node(0)[0], 0.0);
    }

    #[test]
    fn modulus_does_not_grow() {
        let g = Arc::new(TimeGrid::uniform(1.0, 200).unwrap());
        let p = HPath::from_fn(g, 1, |t, out| out[0] = (40.0 * t).sin() + (7.0 * t * t).cos());
        let s = HSpace::euclidean(1);
        let m = mollify(&p, 25.0);
        for steps in [1usize, 5, 20] {
            let d = steps as f64 / 200.0;
            assert!(
                modulus_of_continuity(&s, &m, d, NormKind::H) <= modulus_of_continuity(&s, &p, d, NormKind::H) + 1e-12
            );
        }
    }
}
