//! Two-covariance PLDA: `x = y + e`, `y ~ N(mu, B)` per speaker,
//! `e ~ N(0, W)` per utterance.

use serde::{Deserialize, Serialize};

use crate::backend::linalg::{cholesky_ridged, Cholesky, Mat};
use crate::error::{Error, Result};
use crate::scalar::{axpy, norm, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PldaConfig {
    pub iterations: usize,
    pub length_norm: bool,
    /// Relative ridge tried first when a covariance is singular.
    pub ridge: f64,
}

impl Default for PldaConfig {
    fn default() -> Self {
        PldaConfig {
            iterations: 10,
            length_norm: true,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PldaModel<T> {
    /// Subtracted before length normalization.
    pub center: Vec<T>,
    pub length_norm: bool,
    pub mu: Vec<T>,
    pub between: Mat<T>,
    pub within: Mat<T>,
    /// Total log-likelihood before the first and after every EM iteration.
    pub log_likelihood: Vec<f64>,
    scoring: Scoring<T>,
}

#[derive(Debug, Clone)]
struct Scoring<T> {
    q: Mat<T>,
    p: Mat<T>,
    constant: T,
}

fn scoring<T: Scalar>(b: &Mat<T>, w: &Mat<T>, ridge: f64) -> Result<Scoring<T>> {
    let total = b.add(w);
    let (tc, _) = cholesky_ridged(&total, ridge, "total")?;
    let t_inv = tc.inverse();
    // S = T - B T^-1 B, the conditional covariance of one vector given the other.
    let s = total.sub(&b.matmul(&t_inv).matmul(b)).symmetrize();
    let (sc, _) = cholesky_ridged(&s, ridge, "conditional")?;
    let s_inv = sc.inverse();
    Ok(Scoring {
        q: t_inv.sub(&s_inv).symmetrize(),
        p: t_inv.matmul(b).matmul(&s_inv).symmetrize(),
        constant: T::of(0.5) * (tc.logdet() - sc.logdet()),
    })
}

/// Log-likelihood of one speaker's centered vectors (`r = x - mu`).
fn speaker_log_likelihood<T: Scalar>(
    r: &[Vec<T>],
    b_chol: &Cholesky<T>,
    b_inv: &Mat<T>,
    w_chol: &Cholesky<T>,
    w_inv: &Mat<T>,
) -> Result<f64> {
    let n = r.len();
    let d = b_inv.n;
    let mut sum = vec![T::zero(); d];
    let mut quad = T::zero();
    for x in r {
        axpy(T::one(), x, &mut sum);
        quad += w_inv.bilinear(x, x);
    }
    let b = w_inv.matvec(&sum);
    let prec = b_inv.add(&w_inv.scale(T::of_usize(n))).symmetrize();
    let pc = Cholesky::new(&prec)?;
    let inner = crate::scalar::dot(&b, &pc.solve(&b));
    let ll = -((n * d) as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln()
        - n as f64 / 2.0 * w_chol.logdet().as_f64()
        - 0.5 * b_chol.logdet().as_f64()
        - 0.5 * pc.logdet().as_f64()
        - 0.5 * (quad - inner).as_f64();
    Ok(ll)
}

fn total_log_likelihood<T: Scalar>(
    groups: &[Vec<Vec<T>>],
    mu: &[T],
    b: &Mat<T>,
    w: &Mat<T>,
    ridge: f64,
) -> Result<f64> {
    let (bc, _) = cholesky_ridged(b, ridge, "between-class")?;
    let (wc, _) = cholesky_ridged(w, ridge, "within-class")?;
    let b_inv = bc.inverse();
    let w_inv = wc.inverse();
    let mut ll = 0.0;
    for g in groups {
        let r: Vec<Vec<T>> = g
            .iter()
            .map(|x| x.iter().zip(mu).map(|(&a, &m)| a - m).collect())
            .collect();
        ll += speaker_log_likelihood(&r, &bc, &b_inv, &wc, &w_inv)?;
    }
    Ok(ll)
}

fn preprocess<T: Scalar>(x: &[T], center: &[T], length_norm: bool) -> Vec<T> {
    let mut v: Vec<T> = x.iter().zip(center).map(|(&a, &c)| a - c).collect();
    if length_norm {
        let n = norm(&v);
        if n > T::zero() {
            let k = T::of_usize(v.len()).sqrt() / n;
            v.iter_mut().for_each(|a| *a *= k);
        }
    }
    v
}

/// EM training from vectors grouped by speaker.
pub fn train_plda<T: Scalar>(groups: &[Vec<Vec<T>>], cfg: &PldaConfig) -> Result<PldaModel<T>> {
    let groups: Vec<&Vec<Vec<T>>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if groups.len() < 2 {
        return Err(Error::Argument("PLDA needs at least two speakers".into()));
    }
    let d = groups[0][0].len();
    if d == 0 || groups.iter().flat_map(|g| g.iter()).any(|x| x.len() != d) {
        return Err(Error::Shape("PLDA vectors must share one non-zero dimension".into()));
    }
    if !groups.iter().any(|g| g.len() >= 2) {
        return Err(Error::Argument(
            "PLDA needs at least one speaker with two or more vectors".into(),
        ));
    }
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let mut center = vec![T::zero(); d];
    for x in groups.iter().flat_map(|g| g.iter()) {
        axpy(T::one(), x, &mut center);
    }
    center.iter_mut().for_each(|c| *c /= T::of_usize(n_total));
    let data: Vec<Vec<Vec<T>>> = groups
        .iter()
        .map(|g| g.iter().map(|x| preprocess(x, &center, cfg.length_norm)).collect())
        .collect();

    // Initialization from class means and within-class scatter.
    let k = T::of_usize(data.len());
    let means: Vec<Vec<T>> = data
        .iter()
        .map(|g| {
            let mut m = vec![T::zero(); d];
            for x in g {
                axpy(T::one(), x, &mut m);
            }
            m.iter_mut().for_each(|v| *v /= T::of_usize(g.len()));
            m
        })
        .collect();
    let mut mu = vec![T::zero(); d];
    for m in &means {
        axpy(T::one() / k, m, &mut mu);
    }
    let mut b = Mat::zeros(d);
    for m in &means {
        let c: Vec<T> = m.iter().zip(&mu).map(|(&a, &u)| a - u).collect();
        b.add_outer(&c, T::one() / k);
    }
    let mut w = Mat::zeros(d);
    for (g, m) in data.iter().zip(&means) {
        for x in g {
            let c: Vec<T> = x.iter().zip(m).map(|(&a, &u)| a - u).collect();
            w.add_outer(&c, T::one() / T::of_usize(n_total));
        }
    }

    let mut lls = vec![total_log_likelihood(&data, &mu, &b, &w, cfg.ridge)?];
    for _ in 0..cfg.iterations {
        let (bc, _) = cholesky_ridged(&b, cfg.ridge, "between-class")?;
        let (wc, _) = cholesky_ridged(&w, cfg.ridge, "within-class")?;
        let b_inv = bc.inverse();
        let w_inv = wc.inverse();
        let b_inv_mu = b_inv.matvec(&mu);
        let mut new_mu = vec![T::zero(); d];
        let mut second = Mat::zeros(d);
        let mut new_w = Mat::zeros(d);
        for g in &data {
            let n = g.len();
            let prec = b_inv.add(&w_inv.scale(T::of_usize(n))).symmetrize();
            let pc = Cholesky::new(&prec)?;
            let cov = pc.inverse();
            let mut sum = vec![T::zero(); d];
            for x in g {
                axpy(T::one(), x, &mut sum);
            }
            let mut rhs = w_inv.matvec(&sum);
            axpy(T::one(), &b_inv_mu, &mut rhs);
            let m = pc.solve(&rhs);
            axpy(T::one() / k, &m, &mut new_mu);
            second = second.add(&cov);
            second.add_outer(&m, T::one());
            for x in g {
                let c: Vec<T> = x.iter().zip(&m).map(|(&a, &u)| a - u).collect();
                new_w.add_outer(&c, T::one());
            }
            new_w = new_w.add(&cov.scale(T::of_usize(n)));
        }
        mu = new_mu;
        let mut nb = second.scale(T::one() / k);
        nb.add_outer(&mu, -T::one());
        b = nb.symmetrize();
        w = new_w.scale(T::one() / T::of_usize(n_total)).symmetrize();
        lls.push(total_log_likelihood(&data, &mu, &b, &w, cfg.ridge)?);
    }
    let scoring = scoring(&b, &w, cfg.ridge)?;
    Ok(PldaModel {
        center,
        length_norm: cfg.length_norm,
        mu,
        between: b,
        within: w,
        log_likelihood: lls,
        scoring,
    })
}

impl<T: Scalar> PldaModel<T> {
    /// Model with given parameters and no preprocessing.
    pub fn from_parts(mu: Vec<T>, between: Mat<T>, within: Mat<T>) -> Result<Self> {
        let d = mu.len();
        if between.n != d || within.n != d {
            return Err(Error::Shape("PLDA parameter dimensions disagree".into()));
        }
        let scoring = scoring(&between, &within, 1e-6)?;
        Ok(PldaModel {
            center: vec![T::zero(); d],
            length_norm: false,
            mu,
            between,
            within,
            log_likelihood: Vec::new(),
            scoring,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Centering, optional length normalization, then removal of `mu`.
    pub fn transform(&self, x: &[T]) -> Vec<T> {
        let v = preprocess(x, &self.center, self.length_norm);
        v.iter().zip(&self.mu).map(|(&a, &m)| a - m).collect()
    }

    /// Same-speaker versus different-speaker log-likelihood ratio.
    pub fn score(&self, enroll: &[T], test: &[T]) -> Result<T> {
        let d = self.dim();
        if enroll.len() != d || test.len() != d {
            return Err(Error::Shape(format!(
                "PLDA expects {d}-dim vectors, got {} and {}",
                enroll.len(),
                test.len()
            )));
        }
        let a = self.transform(enroll);
        let b = self.transform(test);
        Ok(self.score_transformed(&a, &b))
    }

    fn score_transformed(&self, a: &[T], b: &[T]) -> T {
        let s = &self.scoring;
        let half = T::of(0.5);
        half * s.q.bilinear(a, a) + half * s.q.bilinear(b, b) + s.p.bilinear(a, b) + s.constant
    }
}
