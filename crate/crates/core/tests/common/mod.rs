#![allow(dead_code)]

use qvk_core::admissible::{angle_separated_frame, AdmissibleBall};
use qvk_core::{QPoint, SupportDecomposition};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_qpoint<R: Rng>(rng: &mut R, q: usize, n: usize, scale: f64) -> QPoint {
    let pts = (0..q * n).map(|_| rng.gen_range(-scale..scale)).collect();
    QPoint::new(q, n, pts).unwrap()
}

/// Sheets built one at a time: a fresh point, an exact copy, or a small
/// perturbation of an earlier sheet at a log-uniform scale. Produces
/// coincident sheets and clusters at several separations.
pub fn clustered_qpoint<R: Rng>(rng: &mut R, q: usize, n: usize) -> QPoint {
    let mut pts: Vec<f64> = Vec::with_capacity(q * n);
    for j in 0..q {
        let roll: f64 = rng.gen();
        if j == 0 || roll < 0.3 {
            pts.extend((0..n).map(|_| rng.gen_range(-1.0..1.0)));
        } else {
            let src = rng.gen_range(0..j);
            let base = pts[src * n..(src + 1) * n].to_vec();
            if roll < 0.45 {
                pts.extend(base);
            } else {
                let scale = 10f64.powf(rng.gen_range(-4.0..0.0));
                let d = normal_vec(rng, n);
                pts.extend(base.iter().zip(&d).map(|(b, e)| b + scale * e));
            }
        }
    }
    QPoint::new(q, n, pts).unwrap()
}

/// Exhaustive minimum over all `Q!` pairings.
pub fn brute_metric(p: &QPoint, r: &QPoint) -> f64 {
    let q = p.q();
    let mut perm: Vec<usize> = (0..q).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |perm| {
        let c: f64 = (0..q)
            .map(|i| {
                p.sheet(i)
                    .iter()
                    .zip(r.sheet(perm[i]))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        best = best.min(c);
    });
    best.sqrt()
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

/// A random admissible ball together with a member point, or `None` when
/// the drawn sites are too close along some axis.
pub fn admissible_instance<R: Rng>(rng: &mut R, q: usize, n: usize) -> Option<(AdmissibleBall, QPoint)> {
    let m = rng.gen_range(1..=q);
    let mut mult = vec![1usize; m];
    for _ in m..q {
        mult[rng.gen_range(0..m)] += 1;
    }
    let sites: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let center = SupportDecomposition::new(n, sites, mult.clone()).ok()?;
    let frame = angle_separated_frame(&center).ok()?.frame;
    let mut gap = f64::INFINITY;
    for a in 0..n {
        let e = frame.direction(a);
        for i in 0..m {
            for j in i + 1..m {
                let d: f64 = e
                    .iter()
                    .zip(center.site(i).iter().zip(center.site(j)))
                    .map(|(e, (x, y))| e * (x - y))
                    .sum();
                gap = gap.min(d.abs());
            }
        }
    }
    if m == 1 {
        gap = 1.0;
    }
    if gap < 1e-4 {
        return None;
    }
    let radius = rng.gen_range(0.1..0.45) * gap;
    let mut sheets: Vec<Vec<f64>> = Vec::with_capacity(q);
    for (i, &l) in mult.iter().enumerate() {
        for _ in 0..l {
            let mut d = normal_vec(rng, n);
            let len = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            let r = 0.999 * radius * rng.gen::<f64>().powf(1.0 / n as f64);
            d.iter_mut().for_each(|x| *x *= r / len);
            sheets.push(center.site(i).iter().zip(&d).map(|(c, x)| c + x).collect());
        }
    }
    sheets.shuffle(rng);
    let p = QPoint::from_sheets(n, &sheets).ok()?;
    Some((AdmissibleBall { center, radius, frame }, p))
}
