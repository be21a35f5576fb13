//! Loss values checked against direct, loop-based reimplementations.

use idal_core::autodiff::{Graph, Tensor};
use idal_core::data::random_matrix;
use idal_core::losses::{
    info_max_loss, mcc_loss, mmd_loss, one_hot, plmmd_loss, plmmd_weights, ConditioningMap, KernelSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn kernel(a: &[f64], b: &[f64], sigmas: &[f64]) -> f64 {
    sigmas.iter().map(|s| (-sq_dist(a, b) / (2.0 * s * s)).exp()).sum()
}

fn brute_weighted_mmd(x: &Tensor, y: &Tensor, wxx: &[f64], wxy: &[f64], wyy: &[f64], sigmas: &[f64]) -> f64 {
    let (n, m) = (x.rows(), y.rows());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += wxx[i * n + j] * kernel(x.row(i), x.row(j), sigmas);
        }
        for j in 0..m {
            total -= 2.0 * wxy[i * m + j] * kernel(x.row(i), y.row(j), sigmas);
        }
    }
    for i in 0..m {
        for j in 0..m {
            total += wyy[i * m + j] * kernel(y.row(i), y.row(j), sigmas);
        }
    }
    total
}

fn mmd(x: &Tensor, y: &Tensor, spec: &KernelSpec) -> f64 {
    let mut g = Graph::new();
    let a = g.constant(x.clone()).unwrap();
    let b = g.constant(y.clone()).unwrap();
    let l = mmd_loss(&mut g, a, b, spec).unwrap();
    g.value(l).item()
}

#[test]
fn scalar_mmd_closed_form() {
    let x = Tensor::from_rows(&[[0.0]]).unwrap();
    let y = Tensor::from_rows(&[[1.0]]).unwrap();
    let v = mmd(&x, &y, &KernelSpec::single(1.0));
    assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-12);
    assert!((v - 0.786939).abs() < 1e-6);
}

#[test]
fn mmd_matches_uniform_weight_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = KernelSpec {
        bandwidth: idal_core::losses::Bandwidth::Fixed(1.3),
        ..KernelSpec::default()
    };
    let sigmas: Vec<f64> = spec.multipliers.iter().map(|m| 1.3 * m).collect();
    for _ in 0..20 {
        let n = rng.random_range(1..7);
        let m = rng.random_range(1..7);
        let x = random_matrix(n, 3, -2.0, 2.0, &mut rng);
        let y = random_matrix(m, 3, -1.0, 3.0, &mut rng);
        let (wx, wxy, wy) = (
            vec![1.0 / (n * n) as f64; n * n],
            vec![1.0 / (n * m) as f64; n * m],
            vec![1.0 / (m * m) as f64; m * m],
        );
        let oracle = brute_weighted_mmd(&x, &y, &wx, &wxy, &wy, &sigmas);
        assert!((mmd(&x, &y, &spec) - oracle).abs() < 1e-12);
    }
}

#[test]
fn plmmd_general_weights_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = KernelSpec::single(0.9);
    for _ in 0..30 {
        let bs = rng.random_range(2..8);
        let bt = rng.random_range(2..8);
        let ls: Vec<usize> = (0..bs).map(|i| i % 2).collect();
        let mut pseudo = Tensor::zeros(&[bt, 2]);
        for i in 0..bt {
            if rng.random_bool(0.7) {
                pseudo.data_mut()[i * 2 + rng.random_range(0..2)] = 1.0;
            }
        }
        let w = plmmd_weights(&one_hot(&ls, 2).unwrap(), &pseudo).unwrap();
        let x = random_matrix(bs, 4, -1.0, 1.0, &mut rng);
        let y = random_matrix(bt, 4, -1.0, 1.5, &mut rng);

        let mut g = Graph::new();
        let (a, b) = (g.constant(x.clone()).unwrap(), g.constant(y.clone()).unwrap());
        let l = plmmd_loss(&mut g, a, b, &w, &spec).unwrap();
        let got = g.value(l).item();

        // Weights rebuilt by hand from class counts.
        let count = |t: &Tensor, c: usize| (0..t.rows()).filter(|&i| t.get(i, c) == 1.0).count();
        let src = one_hot(&ls, 2).unwrap();
        let common: Vec<usize> = (0..2)
            .filter(|&c| count(&src, c) > 0 && count(&pseudo, c) > 0)
            .collect();
        let mut wxx = vec![0.0; bs * bs];
        let mut wxy = vec![0.0; bs * bt];
        let mut wyy = vec![0.0; bt * bt];
        for &c in &common {
            let (ns, nt) = (count(&src, c) as f64, count(&pseudo, c) as f64);
            let nc = common.len() as f64;
            for i in 0..bs {
                for j in 0..bs {
                    wxx[i * bs + j] += src.get(i, c) * src.get(j, c) / (ns * ns * nc);
                }
                for j in 0..bt {
                    wxy[i * bt + j] += src.get(i, c) * pseudo.get(j, c) / (ns * nt * nc);
                }
            }
            for i in 0..bt {
                for j in 0..bt {
                    wyy[i * bt + j] += pseudo.get(i, c) * pseudo.get(j, c) / (nt * nt * nc);
                }
            }
        }
        let oracle = if common.is_empty() {
            0.0
        } else {
            brute_weighted_mmd(&x, &y, &wxx, &wxy, &wyy, &[0.9])
        };
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }
}

#[test]
fn plmmd_single_class_reduces_to_mmd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let bs = rng.random_range(1..9);
        let bt = rng.random_range(1..9);
        let c = rng.random_range(0..3);
        let w = plmmd_weights(&one_hot(&vec![c; bs], 3).unwrap(), &one_hot(&vec![c; bt], 3).unwrap()).unwrap();
        let x = random_matrix(bs, 5, -1.0, 1.0, &mut rng);
        let y = random_matrix(bt, 5, 0.0, 2.0, &mut rng);
        let spec = KernelSpec::default();
        let mut g = Graph::new();
        let (a, b) = (g.constant(x.clone()).unwrap(), g.constant(y.clone()).unwrap());
        let p = plmmd_loss(&mut g, a, b, &w, &spec).unwrap();
        assert!((g.value(p).item() - mmd(&x, &y, &spec)).abs() <= 1e-12);
    }
}

#[test]
fn plmmd_without_common_class_is_zero() {
    let w = plmmd_weights(&one_hot(&[0, 0, 1], 4).unwrap(), &one_hot(&[2, 3], 4).unwrap()).unwrap();
    assert_eq!(w.common_class_count, 0);
    let mut g = Graph::new();
    let a = g.param(Tensor::from_rows(&[[1.0], [2.0], [3.0]]).unwrap()).unwrap();
    let b = g.param(Tensor::from_rows(&[[0.0], [5.0]]).unwrap()).unwrap();
    let l = plmmd_loss(&mut g, a, b, &w, &KernelSpec::default()).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    g.backward(l).unwrap();
    assert!(g.grad(a).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

#[test]
fn info_max_matches_entropy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (n, k) = (rng.random_range(1..10), rng.random_range(2..6));
        let mut rows = vec![];
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            rows.push(raw.into_iter().map(|v| v / s).collect::<Vec<_>>());
        }
        let mean: Vec<f64> = (0..k)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let oracle = -entropy(&mean) + rows.iter().map(|r| entropy(r)).sum::<f64>() / n as f64;
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_rows(&rows).unwrap()).unwrap();
        let l = info_max_loss(&mut g, p).unwrap();
        assert!((g.value(l).item() - oracle).abs() < 1e-12);
    }
}

#[test]
fn info_max_one_hot_uniform_marginal() {
    for k in [2usize, 3, 5, 8] {
        let labels: Vec<usize> = (0..3 * k).map(|i| i % k).collect();
        let mut g = Graph::new();
        let p = g.constant(one_hot(&labels, k).unwrap()).unwrap();
        let l = info_max_loss(&mut g, p).unwrap();
        assert!((-g.value(l).item() - (k as f64).ln()).abs() < 1e-9);
    }
}

fn mcc_oracle(logits: &Tensor, t: f64) -> f64 {
    let (b, c) = (logits.rows(), logits.cols());
    let probs: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let row: Vec<f64> = logits.row(i).iter().map(|v| v / t).collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let h: Vec<f64> = probs.iter().map(|p| entropy(p)).collect();
    let z: f64 = h.iter().map(|v| (-v).exp()).sum();
    let w: Vec<f64> = h.iter().map(|v| b as f64 * (-v).exp() / z).collect();
    let mut conf = vec![0.0; c * c];
    for i in 0..b {
        for j in 0..c {
            for k in 0..c {
                conf[j * c + k] += probs[i][j] * w[i] * probs[i][k];
            }
        }
    }
    let mut off = 0.0;
    for j in 0..c {
        let s: f64 = conf[j * c..(j + 1) * c].iter().sum();
        for k in 0..c {
            if j != k {
                off += conf[j * c + k] / s;
            }
        }
    }
    off / c as f64
}

fn mcc(logits: &Tensor) -> f64 {
    let mut g = Graph::new();
    let l = g.constant(logits.clone()).unwrap();
    let v = mcc_loss(&mut g, l, 2.5).unwrap();
    g.value(v).item()
}

#[test]
fn mcc_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let logits = random_matrix(rng.random_range(1..12), rng.random_range(2..7), -4.0, 4.0, &mut rng);
        assert!((mcc(&logits) - mcc_oracle(&logits, 2.5)).abs() < 1e-10);
    }
}

#[test]
fn mcc_uniform_and_one_hot() {
    for c in [2usize, 3, 4, 8] {
        let uniform = Tensor::zeros(&[6, c]);
        assert!((mcc(&uniform) - (c as f64 - 1.0) / c as f64).abs() < 1e-9);
        let mut sharp = Tensor::zeros(&[2 * c, c]);
        for i in 0..2 * c {
            sharp.data_mut()[i * c + i % c] = 1e4;
        }
        assert!(mcc(&sharp).abs() < 1e-12);
    }
}

#[test]
fn multilinear_inner_product_factorises() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let map = ConditioningMap::multilinear(5, 3);
    for _ in 0..100 {
        let f = random_matrix(2, 5, -1.0, 1.0, &mut rng);
        let p = random_matrix(2, 3, 0.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let (fv, pv) = (g.constant(f.clone()).unwrap(), g.constant(p.clone()).unwrap());
        let h = map.condition(&mut g, fv, pv).unwrap();
        let h = g.value(h);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let lhs = dot(h.row(0), h.row(1));
        let rhs = dot(f.row(0), f.row(1)) * dot(p.row(0), p.row(1));
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
