use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax of a rank-2 tensor, stabilised by subtracting each row's maximum.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, cols) = logits.dims2()?;
    logits.ensure_finite("softmax input")?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(row[0], T::max);
        let mut sum = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(out)
}

/// Gradient through [`softmax_rows`] given its output `probs` and the
/// upstream gradient: `dz = p ⊙ (g − ⟨p, g⟩)` per row.
pub fn softmax_rows_backward<T: Real>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, cols) = probs.dims2()?;
    if grad_out.shape() != probs.shape() {
        return Err(Error::dim(format!(
            "softmax grad shape {:?} vs output {:?}",
            grad_out.shape(),
            probs.shape()
        )));
    }
    let mut out = grad_out.clone();
    for (g, p) in out.data_mut().chunks_exact_mut(cols).zip(probs.data().chunks_exact(cols)) {
        let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
        for (gv, &pv) in g.iter_mut().zip(p) {
            *gv = pv * (*gv - dot);
        }
    }
    Ok(out)
}

pub fn transpose<T: Real>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = a.dims2()?;
    let src = a.data();
    let mut out = vec![T::ZERO; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Tensor::new(&[c, r], out)
}

pub fn relu<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    a.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes gradient where the forward *output* was positive.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
        if o <= T::ZERO {
            *gv = T::ZERO;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::gradcheck::{grad_check, DEFAULT_STEP};
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetric_row() {
        let p = softmax_rows(&Tensor::<f32>::from_rows(&[vec![0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_large_spread_does_not_overflow() {
        let p = softmax_rows(&Tensor::<f32>::from_rows(&[vec![1000.0, 0.0]]).unwrap()).unwrap();
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-6);
        assert!(p.data()[1] < 1e-30);
    }

    #[test]
    fn softmax_of_log_weights() {
        let row = vec![1f64.ln(), 2f64.ln(), 3f64.ln()];
        let p = softmax_rows(&Tensor::from_rows(&[row]).unwrap()).unwrap();
        for (a, e) in p.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let t = Tensor::<f32>::from_rows(&[vec![f32::INFINITY, 0.0]]).unwrap();
        assert!(matches!(softmax_rows(&t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z = Tensor::<f64>::from_rows(&[vec![0.3, -1.2, 2.0], vec![0.0, 0.5, -0.5]]).unwrap();
        let r = Tensor::<f64>::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.25, 3.0, -1.0]]).unwrap();
        let loss = |p: &[Tensor<f64>]| -> f64 {
            let s = softmax_rows(&p[0]).unwrap();
            s.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let p = softmax_rows(&z).unwrap();
        let dz = softmax_rows_backward(&p, &r).unwrap();
        let err = grad_check(loss, &[z], &[dz], DEFAULT_STEP).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn transpose_examples() {
        let one = Tensor::<f32>::from_rows(&[vec![4.0]]).unwrap();
        assert_eq!(transpose(&one).unwrap(), one);
        let a = Tensor::<f32>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(transpose(&a).unwrap(), Tensor::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap());
        assert!(matches!(transpose(&Tensor::<f32>::zeros(&[2, 2, 2])), Err(Error::Dimension(_))));
    }

    #[test]
    fn relu_backward_masks() {
        let x = Tensor::<f32>::new(&[4], vec![-1.0, 0.0, 2.0, 3.0]).unwrap();
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 3.0]);
        let g = relu_backward(&y, &Tensor::full(&[4], 1.0));
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_stochastic(
            rows in prop::collection::vec(prop::collection::vec(-2000.0f32..2000.0, 1..12), 1..6)
        ) {
            let width = rows[0].len();
            let rows: Vec<Vec<f32>> = rows.into_iter().map(|mut r| { r.resize(width, 0.0); r }).collect();
            let p = softmax_rows(&Tensor::from_rows(&rows).unwrap()).unwrap();
            for r in 0..rows.len() {
                let row = p.row(r);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                let s: f32 = row.iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-5, "row sum {}", s);
            }
        }

        #[test]
        fn transpose_is_involution(r in 1usize..9, c in 1usize..9, seed in 0u32..1000) {
            let data: Vec<f32> = (0..r * c).map(|i| (i as f32 + seed as f32).sin()).collect();
            let a = Tensor::new(&[r, c], data).unwrap();
            let t = transpose(&a).unwrap();
            for i in 0..r {
                for j in 0..c {
                    prop_assert_eq!(t.at2(j, i), a.at2(i, j));
                }
            }
            prop_assert_eq!(transpose(&t).unwrap(), a);
        }
    }
}
