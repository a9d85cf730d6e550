//! Single-clip forward-pass timing for both model variants.

use std::time::Instant;

use pcl_data::{generate_synthetic, SyntheticSpec};
use pcl_net::{param_count, Variant};

use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::pipeline::Pipeline;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub variant: Variant,
    pub params: usize,
    pub runs: usize,
    pub median_s: f64,
    pub p10_s: f64,
    pub p90_s: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

impl BenchmarkReport {
    /// The decoupled variant must be both lighter and no slower.
    pub fn ordering_ok(&self) -> bool {
        let find = |v: Variant| self.rows.iter().find(|r| r.variant == v);
        match (find(Variant::PclNet), find(Variant::PclNetC)) {
            (Some(plain), Some(coupled)) => {
                plain.median_s <= coupled.median_s && plain.params < coupled.params
            }
            _ => false,
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::from("variant   params      runs  median_s   p10_s      p90_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<9} {:<11} {:<5} {:<10.4} {:<10.4} {:<10.4}\n",
                r.variant.to_string(),
                r.params,
                r.runs,
                r.median_s,
                r.p10_s,
                r.p90_s
            ));
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Median and p10/p90 wall-clock of a single-clip forward pass over `runs`
/// warm repetitions, for both variants at identical widths. Runs interleave
/// the variants so background load cannot bias one side.
pub fn run_benchmark(base: &TrainConfig, runs: usize) -> Result<BenchmarkReport, TrainError> {
    let runs = runs.max(2);
    let spec = SyntheticSpec::translation(base.clip_len.max(2), base.frame_size, base.frame_size, 1.5, -0.5);
    let clip = generate_synthetic::<f32>(&spec, base.seed)?;

    let variants = [Variant::PclNet, Variant::PclNetC];
    let pipelines: Vec<Pipeline<f32>> = variants
        .iter()
        .map(|&v| Pipeline::<f32>::new(base.clone().with_variant(v)))
        .collect::<Result<_, _>>()?;
    for pipeline in &pipelines {
        for _ in 0..3 {
            let _ = pipeline.infer_clip(&clip)?; // warm-up
        }
    }
    let mut times = vec![Vec::with_capacity(runs); 2];
    for _ in 0..runs {
        for (vi, pipeline) in pipelines.iter().enumerate() {
            let t0 = Instant::now();
            let flows = pipeline.infer_clip(&clip)?;
            times[vi].push(t0.elapsed().as_secs_f64());
            debug_assert_eq!(flows.len(), clip.len() - 1);
        }
    }
    let rows = variants
        .iter()
        .zip(times)
        .map(|(&variant, mut t)| {
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            BenchRow {
                variant,
                params: param_count(&base.clone().with_variant(variant).model),
                runs,
                median_s: quantile(&t, 0.5),
                p10_s: quantile(&t, 0.1),
                p90_s: quantile(&t, 0.9),
            }
        })
        .collect();
    Ok(BenchmarkReport { rows })
}
