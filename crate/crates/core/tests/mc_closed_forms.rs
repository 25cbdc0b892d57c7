//! Monte Carlo histograms against the closed-form densities, and the
//! diagonalized representation against direct sampling of the vector.

use nalgebra::{DMatrix, DVector};
use tko_core::mc_oracle::{sample_modes, sample_quadform, Histogram};
use tko_core::quadform_stats::{cumulants, pdf_rician_mode, pdf_single_lambda, pdf_two_pos_two_neg};
use tko_core::{decompose, GaussianVectorModel, McConfig};

const N: usize = 1_000_000;

#[test]
fn single_lambda_histogram() {
    let (l, s, n0) = (1.3, 0.7, 0.8);
    let r = sample_modes(&[l], &[s], n0, 1, &McConfig::new(11, N)).unwrap();
    let l1 = r.histogram.l1_against_pdf(|v| pdf_single_lambda(v, l, s, n0).unwrap());
    assert!(l1 < 0.02, "L1 = {l1}");
}

#[test]
fn rician_histogram() {
    let (l, s, n0) = (0.9, 1.4, 0.5);
    let r = sample_modes(&[l], &[s], n0, 2, &McConfig::new(12, N)).unwrap();
    let l1 = r.histogram.l1_against_pdf(|v| pdf_rician_mode(v, l, s, n0).unwrap());
    assert!(l1 < 0.02, "L1 = {l1}");
}

#[test]
fn two_positive_two_negative_histogram() {
    let l = [0.655, 0.376, -0.321, -0.042];
    let n0 = 1.0;
    let r = sample_modes(&l, &[0.0; 4], n0, 1, &McConfig::new(13, N)).unwrap();
    let l1 = r.histogram.l1_against_pdf(|v| pdf_two_pos_two_neg(v, l[0], l[1], l[2], l[3], n0).unwrap());
    assert!(l1 < 0.02, "L1 = {l1}");
}

fn two_sample_l1(a: &Histogram, b: &Histogram) -> f64 {
    let (na, nb) = (a.total() as f64, b.total() as f64);
    let inside: f64 = a.counts.iter().zip(&b.counts).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum();
    inside + ((a.underflow + a.overflow) as f64 / na - (b.underflow + b.overflow) as f64 / nb).abs()
}

#[test]
fn modes_reproduce_the_vector_form() {
    let mu = DVector::from_vec(vec![0.4, -0.3, 0.9, 0.1]);
    let m = DMatrix::from_fn(4, 4, |i, j| 0.8f64.powi((i as i32 - j as i32).abs()));
    let model = GaussianVectorModel::new(mu.clone(), m.clone() * 0.6, 0.6).unwrap();
    let j = tko_core::kernel_matrix(1, 2).unwrap();
    let d = decompose(&model, &j).unwrap();
    let direct = sample_quadform(&model, &j, &McConfig::new(21, N)).unwrap();
    let cfg = McConfig::new(22, N).with_edges(direct.histogram.edges.clone());
    let modes = sample_modes(&d.lambdas, &d.s, d.n0, 1, &cfg).unwrap();
    let l1 = two_sample_l1(&direct.histogram, &modes.histogram);
    assert!(l1 < 0.03, "two-sample L1 = {l1}");
    let exact = cumulants(model.mu(), model.covariance(), &j, 4).unwrap();
    for s in [&direct, &modes] {
        for z in s.cumulants.z_scores(&exact.kappa[..4]) {
            assert!(z.abs() < 5.0);
        }
    }
}

#[test]
fn partition_count_changes_the_stream_but_not_the_law() {
    let model = GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
    let j = DMatrix::identity(3, 3);
    let a = sample_quadform(&model, &j, &McConfig { n_partitions: 16, ..McConfig::new(3, 200_000) }).unwrap();
    let b = sample_quadform(&model, &j, &McConfig { n_partitions: 64, ..McConfig::new(3, 200_000) }).unwrap();
    assert_ne!(a.cumulants.k, b.cumulants.k);
    assert!((a.mean() - b.mean()).abs() < 5.0 * (a.cumulants.se[0].hypot(b.cumulants.se[0])));
}
