//! On-disk `HKT1` cache for global heat tensors, keyed by the measure, the
//! kernel matrix and the time grid.

use std::collections::hash_map::DefaultHasher;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::BufWriter;
use std::path::PathBuf;

use harnacklab_core::heat::{Domain, HeatSolver, HeatTensor, TensorData};
use harnacklab_core::{JumpKernel, MetricMeasureSpace};

use crate::formats::Hkt1;
use crate::Result;

pub const CACHE_ENV: &str = "HARNACKLAB_CACHE";

#[derive(Debug, Clone)]
pub struct TensorCache {
    dir: Option<PathBuf>,
}

impl TensorCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).map(PathBuf::from))
    }

    pub fn path(&self, space: &MetricMeasureSpace, kernel: &JumpKernel, times: &[f64]) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let mut h = DefaultHasher::new();
        space.len().hash(&mut h);
        for v in space.measure().iter().chain(kernel.matrix()).chain(times) {
            v.to_bits().hash(&mut h);
        }
        Some(dir.join(format!("{:016x}.hkt1", h.finish())))
    }

    pub fn global_tensor(
        &self,
        space: &MetricMeasureSpace,
        kernel: &JumpKernel,
        solver: &HeatSolver,
        times: &[f64],
    ) -> Result<HeatTensor> {
        let path = if solver.is_translation() { None } else { self.path(space, kernel, times) };
        if let Some(p) = &path {
            if let Ok(mut f) = File::open(p) {
                if let Ok(h) = Hkt1::read(&mut f) {
                    if h.n == space.len() && h.times == times {
                        return Ok(HeatTensor {
                            domain: Domain::Global,
                            index: (0..h.n).collect(),
                            mu: space.measure().to_vec(),
                            times: h.times.clone(),
                            data: TensorData::Dense(h.rows()),
                        });
                    }
                }
            }
        }
        let tensor = solver.tensor(times)?;
        if let (Some(p), Some(h)) = (path, Hkt1::from_tensor(&tensor)) {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let tmp = p.with_extension("tmp");
            h.write(&mut BufWriter::new(File::create(&tmp)?))?;
            std::fs::rename(tmp, p)?;
        }
        Ok(tensor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use harnacklab_core::heat::HeatOptions;
    use harnacklab_core::kernel::make_kernel;
    use harnacklab_core::space::Metric;
    use harnacklab_core::{KernelSpec, ScaleFunction};

    #[test]
    fn cached_tensor_matches_fresh() {
        let dir = tempfile::tempdir().unwrap();
        let s = MetricMeasureSpace::torus(1, 12, Metric::L2).unwrap();
        let phi = ScaleFunction::power(1.0);
        let k = make_kernel(&s, &phi, &KernelSpec::PerturbedStable { c_bounds: [0.5, 2.0], seed: 4 }).unwrap();
        let solver = HeatSolver::new(&s, &k, Domain::Global, &HeatOptions::default()).unwrap();
        assert!(!solver.is_translation());
        let cache = TensorCache::new(Some(dir.path().to_path_buf()));
        let times = [0.5, 1.0];
        let a = cache.global_tensor(&s, &k, &solver, &times).unwrap();
        let file = cache.path(&s, &k, &times).unwrap();
        assert!(file.exists());
        let b = cache.global_tensor(&s, &k, &solver, &times).unwrap();
        for ti in 0..2 {
            for i in 0..12 {
                for j in 0..12 {
                    assert_eq!(a.get(ti, i, j), b.get(ti, i, j));
                }
            }
        }
        assert_ne!(cache.path(&s, &k, &[0.5]), Some(file));
    }
}
