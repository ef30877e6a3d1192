use std::time::Instant;

use serde::{Deserialize, Serialize};

use z2perc::percolation::Detector;
use z2perc::rng::{chain_rng, ChainRng};
use z2perc::{GaugeConfig, Result};

use crate::measure::{sample_slice, QmcRecord};
use crate::params::QmcParams;
use crate::updates::{QmcAcceptance, QmcSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmcSeries {
    pub params: QmcParams,
    pub records: Vec<QmcRecord>,
    pub acceptance: QmcAcceptance,
    pub wall_seconds: f64,
}

impl QmcSeries {
    pub fn column(&self, f: impl Fn(&QmcRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

pub fn run_qmc(params: &QmcParams) -> Result<QmcSeries> {
    run_qmc_with(params, |_| {})
}

/// As [`run_qmc`], handing the slice of every sample to `on_slice`.
pub fn run_qmc_with(params: &QmcParams, mut on_slice: impl FnMut(&GaugeConfig)) -> Result<QmcSeries> {
    let started = Instant::now();
    let mut rng: ChainRng = chain_rng(params.seed, params.stream);
    let mut sampler = QmcSampler::new(params)?;
    for _ in 0..params.thermalization {
        sampler.sweep(&mut rng);
    }
    let mut det = Detector::new();
    let mut records = Vec::with_capacity(params.n_samples);
    for _ in 0..params.n_samples {
        for _ in 0..params.stride {
            sampler.sweep(&mut rng);
        }
        debug_assert_eq!(sampler.wl.check_consistency(), Ok(()));
        let slice = sample_slice(&sampler.wl, &mut rng);
        on_slice(&slice);
        records.push(sampler.wl.measure_with_slice(&slice, &mut det));
    }
    Ok(QmcSeries {
        params: params.clone(),
        records,
        acceptance: sampler.acceptance,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
