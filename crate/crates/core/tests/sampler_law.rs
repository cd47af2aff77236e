use lcslab_core::gauss::{plan, sample, Method};
use lcslab_core::linalg::{gaussian_vector, haar_orthogonal};
use lcslab_core::oracle::{Diagonal, MatVecOracle};
use lcslab_core::rng::{par_trials, RngStream};
use lcslab_core::stats::{energy_test, gaussian_cov_se, mean_cov};
use nalgebra::{DMatrix, DVector};

fn spectrum(d: usize, kappa: f64) -> Vec<f64> {
    (0..d).map(|i| 1.0 + (kappa - 1.0) * i as f64 / (d - 1) as f64).collect()
}

#[test]
fn covariance_matches_inverse_within_five_standard_errors() {
    let lam = spectrum(8, 16.0);
    let p = plan(16.0, 8, 0.1).unwrap();
    let n = 100_000;
    let s = RngStream::new(31);
    let draws = par_trials(&s, n, |_, rng| {
        let mut o = MatVecOracle::new(Diagonal(DVector::from_vec(lam.clone()))).without_log();
        sample(&p, &mut o, rng).unwrap()
    });
    let (_, cov) = mean_cov(&draws).unwrap();
    let target = DMatrix::from_diagonal(&DVector::from_iterator(8, lam.iter().map(|l| 1.0 / l)));
    let se = gaussian_cov_se(&target, n);
    for i in 0..8 {
        for j in 0..8 {
            let z = (cov[(i, j)] - target[(i, j)]) / se[(i, j)];
            assert!(z.abs() < 5.0, "entry ({i},{j}): z = {z}");
        }
    }
}

#[test]
fn krylov_output_law_is_the_polynomial_gaussian() {
    // rotated spectrum so the test is not purely coordinatewise
    let d = 16;
    let p = plan(16.0, d, 0.3).unwrap();
    assert_eq!(p.method, Method::Krylov);
    let s = RngStream::new(32);
    let u = haar_orthogonal(d, &mut s.child(0).rng());
    let lam = spectrum(d, 16.0);
    let dm = DMatrix::from_diagonal(&DVector::from_vec(lam.clone()));
    let l = u.transpose() * &dm * &u;
    let l = (&l + l.transpose()) * 0.5;
    let q = u.transpose() * DMatrix::from_diagonal(&DVector::from_iterator(d, lam.iter().map(|&x| p.poly.eval(x)))) * &u;
    let n = 1500;
    let a: Vec<Vec<f64>> = par_trials(&s.child(1), n, |_, rng| {
        let mut o = MatVecOracle::new(l.clone()).without_log();
        sample(&p, &mut o, rng).unwrap().iter().copied().collect()
    });
    let b: Vec<Vec<f64>> = par_trials(&s.child(2), n, |_, rng| (&q * gaussian_vector(d, rng)).iter().copied().collect());
    let t = energy_test(&a, &b, 300, &mut s.child(3).rng()).unwrap();
    assert!(t.p_value > 0.05, "{t:?}");
    // a clearly wrong law is detected at this size
    let c: Vec<Vec<f64>> = par_trials(&s.child(4), n, |_, rng| gaussian_vector(d, rng).iter().map(|x| x * 0.5).collect());
    let t = energy_test(&a, &c, 300, &mut s.child(5).rng()).unwrap();
    assert!(t.p_value < 0.01, "{t:?}");
}
