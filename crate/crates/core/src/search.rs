//! Parameter search for intersection-free flexes.
//!
//! Samples come from a Halton sequence under a seeded Cranley-Patterson shift,
//! so a scan is reproducible from `(model, box, budget, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{path_embedding, PathEmbedding};
use crate::error::{Error, Result};
use crate::flexion::{trace_auto, FlexPath, TraceOptions};
use crate::io::MeshDoc;
use crate::twinning::catalog::{build, resolve_params, spec_of, Params};

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `k` in base `b`.
pub fn halton(mut k: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= b as f64;
        r += f * (k % b) as f64;
        k /= b;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    /// Parses `name=lo:hi`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("expected name=lo:hi, got `{s}`"));
        let (name, rest) = s.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Ok(Self {
            name: name.trim().to_string(),
            lo,
            hi,
        })
    }
}

/// Every real parameter of `model`, `frac` of its allowed range either side of
/// the default.
pub fn default_box(model: &str, frac: f64) -> Result<Vec<ParamRange>> {
    let spec = spec_of(model)?;
    Ok(spec
        .params
        .iter()
        .filter(|p| !p.integer)
        .map(|p| {
            let w = frac * (p.max - p.min);
            ParamRange {
                name: p.name.to_string(),
                lo: (p.default - w).max(p.min),
                hi: (p.default + w).min(p.max),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    /// Frames per traced sample.
    pub frames: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: 64,
            seed: 0,
            frames: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SampleOutcome {
    Traced {
        range: (f64, f64),
        embedded_fraction: f64,
        embedded_range: Option<(f64, f64)>,
        embedded_length: f64,
        worst_depth: f64,
    },
    BuildFailed { reason: String },
    TraceFailed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub params: Params,
    pub outcome: SampleOutcome,
}

impl Sample {
    pub fn embedded_length(&self) -> f64 {
        match &self.outcome {
            SampleOutcome::Traced { embedded_length, .. } => *embedded_length,
            _ => 0.0,
        }
    }
}

/// The winning sample with everything needed to rebuild and replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSample {
    pub index: usize,
    pub params: Params,
    pub mesh: MeshDoc,
    pub path: FlexPath,
    pub embedding: PathEmbedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingScan {
    pub model: String,
    pub ranges: Vec<ParamRange>,
    pub options: SearchOptions,
    /// In sampling order.
    pub samples: Vec<Sample>,
    /// Sample indices by decreasing embedded driver range.
    pub ranking: Vec<usize>,
    /// Present when some sample has a nonzero embedded range.
    pub best: Option<BestSample>,
}

/// Box points in sampling order.
pub fn sample_points(ranges: &[ParamRange], budget: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if ranges.len() > PRIMES.len() {
        return Err(Error::InvalidParam {
            name: "box".into(),
            reason: format!("at most {} dimensions", PRIMES.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = ranges.iter().map(|_| rng.random::<f64>()).collect();
    Ok((0..budget as u64)
        .map(|k| {
            ranges
                .iter()
                .enumerate()
                .map(|(d, r)| {
                    let u = (halton(k + 1, PRIMES[d]) + shift[d]).fract();
                    r.lo + u * (r.hi - r.lo)
                })
                .collect()
        })
        .collect())
}

struct Traced {
    params: Params,
    mesh: MeshDoc,
    path: FlexPath,
    embedding: PathEmbedding,
}

fn run_sample(model: &str, params: Params, frames: usize) -> std::result::Result<Traced, SampleOutcome> {
    let m = build(model, &params).map_err(|e| SampleOutcome::BuildFailed { reason: e.to_string() })?;
    let trace_failed = |e: Error| SampleOutcome::TraceFailed { reason: e.to_string() };
    let problem = m
        .flex_problem(None)
        .map_err(trace_failed)?
        .ok_or_else(|| trace_failed(Error::TraceFailed("model has no flex".into())))?;
    let path = trace_auto(&problem, m.mesh().vertices(), frames, &TraceOptions::default()).map_err(trace_failed)?;
    let embedding = path_embedding(&path, m.mesh(), None).map_err(trace_failed)?;
    Ok(Traced {
        params,
        mesh: MeshDoc::from_model(&m),
        path,
        embedding,
    })
}

/// Builds, traces and checks every sample of the box.
pub fn search_embedding(model: &str, ranges: &[ParamRange], opts: &SearchOptions) -> Result<EmbeddingScan> {
    let spec = spec_of(model)?;
    for r in ranges {
        let Some(p) = spec.params.iter().find(|p| p.name == r.name) else {
            return Err(Error::InvalidParam {
                name: r.name.clone(),
                reason: format!("`{model}` has no such parameter"),
            });
        };
        if !(r.lo <= r.hi) || r.lo < p.min || r.hi > p.max {
            return Err(Error::InvalidParam {
                name: r.name.clone(),
                reason: format!("box [{}, {}] not inside [{}, {}]", r.lo, r.hi, p.min, p.max),
            });
        }
        if p.integer {
            return Err(Error::InvalidParam {
                name: r.name.clone(),
                reason: "integer parameters cannot be searched".into(),
            });
        }
    }
    let to_params = |x: &[f64]| -> Params { ranges.iter().zip(x).map(|(r, v)| (r.name.clone(), *v)).collect() };
    let center: Vec<f64> = ranges.iter().map(|r| 0.5 * (r.lo + r.hi)).collect();
    let center = resolve_params(&spec, &to_params(&center))?;
    build(model, &center)
        .map_err(|e| Error::SearchFailed(format!("template does not build at the box center: {e}")))?;

    let points = sample_points(ranges, opts.budget, opts.seed)?;
    let results: Vec<std::result::Result<Traced, SampleOutcome>> = points
        .par_iter()
        .map(|x| run_sample(model, to_params(x), opts.frames))
        .collect();
    if results
        .iter()
        .all(|r| matches!(r, Err(SampleOutcome::BuildFailed { .. })))
    {
        return Err(Error::SearchFailed("no sample builds".into()));
    }

    let samples: Vec<Sample> = results
        .iter()
        .zip(&points)
        .enumerate()
        .map(|(index, (r, x))| Sample {
            index,
            params: to_params(x),
            outcome: match r {
                Ok(t) => SampleOutcome::Traced {
                    range: t.path.range().unwrap_or((f64::NAN, f64::NAN)),
                    embedded_fraction: t.embedding.embedded_fraction(),
                    embedded_range: t.embedding.embedded_range,
                    embedded_length: t.embedding.embedded_length(),
                    worst_depth: t.embedding.worst_depth,
                },
                Err(o) => o.clone(),
            },
        })
        .collect();
    let mut ranking: Vec<usize> = (0..samples.len()).collect();
    // stable sort keeps sampling order among ties
    ranking.sort_by(|&a, &b| samples[b].embedded_length().total_cmp(&samples[a].embedded_length()));
    let best = ranking
        .first()
        .filter(|&&i| samples[i].embedded_length() > 0.0)
        .and_then(|&i| results.into_iter().nth(i)?.ok().map(|t| (i, t)))
        .map(|(index, t)| BestSample {
            index,
            params: t.params,
            mesh: t.mesh,
            path: t.path,
            embedding: t.embedding,
        });
    Ok(EmbeddingScan {
        model: model.to_string(),
        ranges: ranges.to_vec(),
        options: *opts,
        samples,
        ranking,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base_two() {
        let xs: Vec<f64> = (1..=4).map(|k| halton(k, 2)).collect();
        assert_eq!(xs, [0.5, 0.25, 0.75, 0.125]);
        assert!((halton(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn samples_stay_in_the_box_and_repeat() {
        let ranges = vec![
            ParamRange::parse("a=1:2").unwrap(),
            ParamRange::parse("b=-3:-1").unwrap(),
        ];
        let a = sample_points(&ranges, 200, 7).unwrap();
        assert_eq!(a, sample_points(&ranges, 200, 7).unwrap());
        assert_ne!(a, sample_points(&ranges, 200, 8).unwrap());
        for x in &a {
            assert!((1.0..=2.0).contains(&x[0]) && (-3.0..=-1.0).contains(&x[1]));
        }
    }

    #[test]
    fn range_parsing() {
        assert!(ParamRange::parse("fit1=0.1:0.5").is_ok());
        assert!(ParamRange::parse("fit1").is_err());
        assert!(ParamRange::parse("fit1=a:b").is_err());
    }

    #[test]
    fn twins_never_embed() {
        let ranges = vec![ParamRange::parse("c_x=0.5:0.9").unwrap()];
        let opts = SearchOptions {
            budget: 4,
            seed: 1,
            frames: 12,
        };
        let scan = search_embedding("bricard1", &ranges, &opts).unwrap();
        assert_eq!(scan.samples.len(), 4);
        assert!(scan.best.is_none());
        assert!(scan.samples.iter().all(|s| s.embedded_length() == 0.0));
    }

    #[test]
    fn box_outside_limits_is_rejected() {
        let ranges = vec![ParamRange::parse("nonexistent=0:1").unwrap()];
        assert!(search_embedding("bricard1", &ranges, &SearchOptions::default()).is_err());
    }
}
