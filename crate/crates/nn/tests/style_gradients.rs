use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgt_core::skeleton::{SkeletonSpec, POSE_DIM};
use sgt_core::stylestats::StyleNormStats;
use sgt_nn::style::{unit_bones, StyleOps};

const T: usize = 12;
const H: f64 = 1e-5;

fn loss(ops: &StyleOps, x: &Tensor, w: &Tensor) -> Tensor {
    let s = ops.normalized(&unit_bones(x).unwrap()).unwrap();
    (s * w).unwrap().sum_all().unwrap()
}

fn eval(ops: &StyleOps, x: &[f64], w: &Tensor) -> f64 {
    let t = Tensor::from_slice(x, (1, T, POSE_DIM), &Device::Cpu).unwrap();
    loss(ops, &t, w).to_scalar::<f64>().unwrap()
}

/// Autodiff gradient of a weighted sum of the normalized style against
/// central finite differences.
#[test]
fn gradients_match_finite_differences() {
    let skel = SkeletonSpec::default();
    // wide normalization so the clamp never engages
    let stats = StyleNormStats::new([0.05, 0.4, 0.0], [1.0, 1.0, 1.0]).unwrap();
    let ops = StyleOps::new(&skel, &stats, 30, T, DType::F64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..T * POSE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w_vals: Vec<f64> = (0..T * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Tensor::from_slice(&w_vals, (1, T, 3), &Device::Cpu).unwrap();

        let var = candle_core::Var::from_slice(&x, (1, T, POSE_DIM), &Device::Cpu).unwrap();
        let grads = loss(&ops, var.as_tensor(), &w).backward().unwrap();
        let g = grads
            .get(var.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();

        let mut fd = vec![0.0; x.len()];
        for k in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += H;
            minus[k] -= H;
            fd[k] = (eval(&ops, &plus, &w) - eval(&ops, &minus, &w)) / (2.0 * H);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    assert!(worst <= 1e-3, "worst relative gradient error {worst}");
}

#[test]
fn gradients_are_finite_for_still_motion() {
    let skel = SkeletonSpec::default();
    let stats = StyleNormStats::new([0.0; 3], [1.0; 3]).unwrap();
    let ops = StyleOps::new(&skel, &stats, 30, T, DType::F64).unwrap();
    let frame: Vec<f64> = (0..POSE_DIM).map(|k| if k % 3 == 1 { 1.0 } else { 0.0 }).collect();
    let x: Vec<f64> = frame.iter().cycle().take(T * POSE_DIM).copied().collect();
    let var = candle_core::Var::from_slice(&x, (1, T, POSE_DIM), &Device::Cpu).unwrap();
    let w = Tensor::ones((1, T, 3), DType::F64, &Device::Cpu).unwrap();
    let grads = loss(&ops, var.as_tensor(), &w).backward().unwrap();
    let g = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
    assert!(g.iter().all(|v| v.is_finite()));
}
