#![allow(dead_code)]

pub mod vertex;

use std::path::{Path, PathBuf};

use coedge::io::{load_cluster, load_model_document};
use coedge::Scenario;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Model fixture on a cluster fixture, with the model's element width.
pub fn scenario(model: &str, cluster: &str, deadline_s: f64) -> Scenario {
    let root = fixtures();
    let doc = load_model_document(&root.join(format!("models/{model}.toml"))).expect("model fixture");
    let cluster = load_cluster(&root.join(format!("clusters/{cluster}.toml"))).expect("cluster fixture");
    let s = Scenario::new(doc.model, cluster, deadline_s).expect("fixture scenario");
    match doc.elem_bytes {
        Some(b) => s.with_elem_bytes(b).expect("element width"),
        None => s,
    }
}

pub const MODELS: [(&str, f64); 4] = [("alexnet", 0.1), ("vggf", 0.1), ("googlenet", 0.2), ("mobilenet", 0.1)];

pub fn six(model: &str, deadline_s: f64) -> Scenario {
    scenario(model, &format!("six_{model}"), deadline_s)
}

/// A feasible, bounded LP with at most 12 variables and few enough rows for
/// vertex enumeration: rows are built around a random interior point and
/// the objective is either positive or capped by a packing row.
pub fn random_lp<R: rand::Rng>(rng: &mut R) -> coedge::lp::LpProblem {
    let n = rng.gen_range(1..=12);
    let mut m = 1;
    while m < 8 && vertex::binomial(n + m + 1, n) <= 3000 {
        m += 1;
    }
    let m = rng.gen_range(1..=m);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
    let dot = |a: &[f64]| a.iter().zip(&x0).map(|(u, v)| u * v).sum::<f64>();
    let signed = rng.gen_bool(0.4);
    let c: Vec<f64> = (0..n)
        .map(|_| if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.1..2.0) })
        .collect();
    let mut p = coedge::lp::LpProblem::new(c);
    if signed {
        p.add_le(vec![1.0; n], dot(&vec![1.0; n]) + rng.gen_range(0.5..3.0));
    }
    let extra = if signed { m - 1 } else { m };
    for _ in 0..extra {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let slack = rng.gen_range(0.0..1.0);
        if rng.gen_bool(0.5) {
            p.add_le(a.clone(), dot(&a) + slack);
        } else {
            let cover: Vec<f64> = a.iter().map(|v| -v.abs()).collect();
            p.add_le(cover.clone(), dot(&cover) + slack);
        }
    }
    if n >= 2 && rng.gen_bool(0.2) {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        p.add_eq(a.clone(), dot(&a));
    }
    p
}
