//! Rate coding of pixel intensities into binary spike rasters.

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_NUM_STEPS: usize = 250;
/// Spike probability per step at full intensity (63.75 Hz at 1 ms steps).
pub const DEFAULT_RATE_SCALE: f64 = 0.06375;

/// Binary input raster over a presentation window.
///
/// Stored sparsely by timestep: for every step the sorted list of inputs
/// that spiked, which is what the simulation loop consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    num_inputs: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl SpikeTrain {
    /// A raster with no spikes.
    pub fn silent(num_inputs: usize, num_steps: usize) -> Self {
        Self {
            num_inputs,
            offsets: vec![0; num_steps + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a raster from per-step lists of spiking inputs.
    pub fn from_active(num_inputs: usize, steps: &[Vec<usize>]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(steps.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for active in steps {
            let mut sorted = active.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if let Some(&i) = sorted.last() {
                if i >= num_inputs {
                    return Err(Error::DimensionMismatch {
                        context: "spike train input index",
                        expected: num_inputs,
                        found: i,
                    });
                }
            }
            indices.extend(sorted.iter().map(|&i| i as u32));
            offsets.push(indices.len());
        }
        Ok(Self {
            num_inputs,
            offsets,
            indices,
        })
    }

    /// Builds a raster from a dense `[input][timestep]` matrix.
    pub fn from_dense(raster: &[Vec<bool>]) -> Result<Self> {
        let num_steps = raster.first().map_or(0, Vec::len);
        if let Some(row) = raster.iter().find(|r| r.len() != num_steps) {
            return Err(Error::DimensionMismatch {
                context: "spike raster row length",
                expected: num_steps,
                found: row.len(),
            });
        }
        let steps: Vec<Vec<usize>> = (0..num_steps)
            .map(|t| (0..raster.len()).filter(|&i| raster[i][t]).collect())
            .collect();
        Self::from_active(raster.len(), &steps)
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_steps(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Inputs that spiked at step `t`, ascending.
    pub fn active(&self, t: usize) -> &[u32] {
        &self.indices[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn get(&self, input: usize, t: usize) -> bool {
        self.active(t).binary_search(&(input as u32)).is_ok()
    }

    pub fn total_spikes(&self) -> usize {
        self.indices.len()
    }

    /// Spike count of every input over the window.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_inputs];
        for &i in &self.indices {
            counts[i as usize] += 1;
        }
        counts
    }

    /// Dense `[input][timestep]` view.
    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        let mut dense = vec![vec![false; self.num_steps()]; self.num_inputs];
        for t in 0..self.num_steps() {
            for &i in self.active(t) {
                dense[i as usize][t] = true;
            }
        }
        dense
    }
}

/// Bernoulli-per-step rate coding: input `i` spikes at each step with
/// probability `image[i] * rate_scale`.
///
/// One uniform draw is taken per (step, input) pair, steps outermost, so two
/// images encoded from the same seed share their random numbers.
pub fn poisson_encode<R: Rng + ?Sized>(
    image: &[f64],
    num_steps: usize,
    rate_scale: f64,
    rng: &mut R,
) -> Result<SpikeTrain> {
    if !(0.0..=1.0).contains(&rate_scale) {
        return Err(Error::InvalidParameter(format!(
            "rate_scale {rate_scale} outside [0, 1]"
        )));
    }
    if let Some((index, &value)) = image
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::IntensityOutOfRange { index, value });
    }
    let probs: Vec<f64> = image.iter().map(|&v| v * rate_scale).collect();
    let mut offsets = Vec::with_capacity(num_steps + 1);
    let mut indices = Vec::new();
    offsets.push(0);
    for _ in 0..num_steps {
        for (i, &p) in probs.iter().enumerate() {
            if rng.gen::<f64>() < p {
                indices.push(i as u32);
            }
        }
        offsets.push(indices.len());
    }
    Ok(SpikeTrain {
        num_inputs: image.len(),
        offsets,
        indices,
    })
}

/// Raw bytes to intensities in [0, 1].
pub fn normalize_pixels(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| f64::from(b) / 255.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_image_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = poisson_encode(&[0.0; 16], 100, 1.0, &mut rng).unwrap();
        assert_eq!(st.total_spikes(), 0);
        assert_eq!(st.num_steps(), 100);
    }

    #[test]
    fn full_intensity_full_rate_spikes_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = poisson_encode(&[1.0, 1.0], 50, 1.0, &mut rng).unwrap();
        assert_eq!(st.counts(), vec![50, 50]);
    }

    #[test]
    fn rejects_bad_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = poisson_encode(&[0.5, 1.5], 10, 0.1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::IntensityOutOfRange { index: 1, .. }));
        assert!(poisson_encode(&[0.5], 10, 1.5, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_raster() {
        let img: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let a = poisson_encode(&img, 250, DEFAULT_RATE_SCALE, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = poisson_encode(&img, 250, DEFAULT_RATE_SCALE, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_round_trip() {
        let dense = vec![vec![true, false, true], vec![false, false, true]];
        let st = SpikeTrain::from_dense(&dense).unwrap();
        assert_eq!(st.to_dense(), dense);
        assert!(st.get(0, 2) && st.get(1, 2) && !st.get(1, 0));
        assert_eq!(st.active(2), &[0, 1]);
    }

    #[test]
    fn normalize_bytes() {
        assert_eq!(normalize_pixels(&[0, 255, 51]), vec![0.0, 1.0, 0.2]);
    }
}
