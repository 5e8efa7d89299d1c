#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use tinysnn::io::idx::{encode_idx, Dataset};

/// Plain transcription of the step rule, one neuron at a time, with dense
/// input-major weights. Shares no code with the library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_thresh_base: f64,
    pub tau_mem: f64,
    pub theta_inc: f64,
    pub tau_theta: f64,
    pub t_refrac: u32,
    pub w_inh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleNeuron {
    pub v: f64,
    pub theta: f64,
    pub refrac: u32,
}

pub fn oracle_step(neurons: &mut [OracleNeuron], w: &[Vec<f64>], input: &[bool], p: &OracleParams) -> Vec<bool> {
    let n = neurons.len();
    let mut spikes = vec![false; n];
    for j in 0..n {
        let nj = &mut neurons[j];
        let was_refractory = nj.refrac > 0;
        if was_refractory {
            nj.refrac -= 1;
        } else {
            let mut sum = 0.0;
            for i in 0..input.len() {
                if input[i] {
                    sum += w[i][j];
                }
            }
            nj.v = nj.v + (p.v_rest - nj.v) / p.tau_mem + sum;
        }
        nj.theta = nj.theta * (1.0 - 1.0 / p.tau_theta);
        if !was_refractory && nj.v >= p.v_thresh_base + nj.theta {
            nj.v = p.v_reset;
            nj.theta += p.theta_inc;
            nj.refrac = p.t_refrac;
            spikes[j] = true;
        }
    }
    let k = spikes.iter().filter(|s| **s).count() as f64;
    for j in 0..n {
        if !spikes[j] {
            let lowered = neurons[j].v - p.w_inh * k;
            let floor = if neurons[j].v < p.v_reset { neurons[j].v } else { p.v_reset };
            neurons[j].v = if lowered < floor { floor } else { lowered };
        }
    }
    spikes
}

/// Small 10-class dataset of `side`x`side` images: class `c` lights a
/// class-specific set of rows and columns with per-sample jitter.
pub fn synthetic_dataset(n: usize, side: usize, salt: usize) -> Dataset {
    let mut images = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        let c = (s * 7 + salt) % 10;
        labels.push(c as u8);
        for r in 0..side {
            for q in 0..side {
                let on = (r + c) % 5 == 0 || (q * 3 + c) % 7 == 0;
                let jitter = ((s * 31 + r * 17 + q * 13 + salt) % 64) as u8;
                images.push(if on { 191 + jitter } else { jitter / 8 });
            }
        }
    }
    Dataset {
        name: "synthetic".into(),
        rows: side,
        cols: side,
        images,
        labels,
    }
}

/// Writes train/t10k IDX pairs into `dir`.
pub fn write_idx_dir(dir: &Path, train: &Dataset, test: &Dataset) {
    fs::create_dir_all(dir).unwrap();
    for (stem, ds) in [("train", train), ("t10k", test)] {
        let (img, lbl) = encode_idx(ds);
        fs::write(dir.join(format!("{stem}-images-idx3-ubyte")), img).unwrap();
        fs::write(dir.join(format!("{stem}-labels-idx1-ubyte")), lbl).unwrap();
    }
}

/// MNIST directory from `TINYSNN_MNIST_DIR` or the workspace `data/mnist`.
pub fn mnist_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("TINYSNN_MNIST_DIR").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
    ];
    candidates.into_iter().flatten().find(|d| {
        let (img, _) = tinysnn::io::idx::split_paths(d, true);
        img.exists()
    })
}
