//! Problem generators: 1-D deconvolution in a hat-function basis, 2-D Fresnel
//! holography of point particles, and random Gaussian instances.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::operators::{LinearOperator, Vector};
use crate::prox::Problem;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn add_noise(g: &mut Vector, sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    for x in g.iter_mut() {
        *x += normal.sample(rng);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvSpec {
    pub grid_size: usize,
    pub n_coeffs: usize,
    /// `w` in the blurring kernel `κ(x) = 1/(1 + x²/w²)`.
    pub kernel_width: f64,
    /// `(coefficient index, amplitude)`.
    pub spikes: Vec<(usize, f64)>,
    pub noise_sigma: f64,
    pub alpha: f64,
}

impl Default for DeconvSpec {
    fn default() -> Self {
        Self {
            grid_size: 256,
            n_coeffs: 32,
            kernel_width: 5.0,
            spikes: vec![(4, 1.0), (11, -0.6), (19, 0.8), (26, 0.5)],
            noise_sigma: 0.0,
            alpha: 1e-4,
        }
    }
}

impl DeconvSpec {
    fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0 || self.grid_size % self.n_coeffs != 0 {
            return Err(Error::invalid(
                "grid_size",
                format!("{} is not divisible by n_coeffs = {}", self.grid_size, self.n_coeffs),
            ));
        }
        if !(self.kernel_width > 0.0) {
            return Err(Error::invalid("kernel_width", "must be positive"));
        }
        if let Some((i, _)) = self.spikes.iter().find(|(i, _)| *i >= self.n_coeffs) {
            return Err(Error::invalid(
                "spikes",
                format!("index {i} is out of range for {} coefficients", self.n_coeffs),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }
}

/// `κ(x) = 1/(1 + x²/w²)` sampled at the signed circular offsets of a grid of length `n`.
pub fn lorentzian_kernel(n: usize, width: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            1.0 / (1.0 + (x / width).powi(2))
        })
        .collect()
}

/// Builds `K = A∘B` with `A` the circular blur and `B` the hat synthesis, the
/// spike coefficient vector and `g = K·truth + noise`.
pub fn make_deconvolution_problem(spec: &DeconvSpec, seed: u64) -> Result<(Problem, Vector)> {
    spec.validate()?;
    let blur = LinearOperator::circular_conv_1d(lorentzian_kernel(spec.grid_size, spec.kernel_width))?;
    let synthesis = LinearOperator::hat_synthesis(spec.n_coeffs, spec.grid_size)?;
    let op = LinearOperator::compose(blur, synthesis)?;

    let mut truth = Vector::zeros(spec.n_coeffs);
    for &(i, a) in &spec.spikes {
        truth[i] += a;
    }
    let mut g = op.apply(&truth)?;
    add_noise(&mut g, spec.noise_sigma, &mut rng(seed))?;
    Ok((Problem::new(op, g, spec.alpha)?, truth))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    /// Column in the image, pixels.
    pub x: usize,
    /// Row in the image, pixels.
    pub y: usize,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HologramSpec {
    /// Side of the square field of view, pixels.
    pub image_size: usize,
    /// Meters per pixel.
    pub pixel_pitch: f64,
    /// Meters.
    pub wavelength: f64,
    /// Recording distance, meters.
    pub distance: f64,
    pub particles: Vec<Particle>,
    pub alpha: f64,
    pub noise_sigma: f64,
    /// Zero margin around the field of view, also the kernel radius;
    /// `None` means `image_size / 2`.
    pub margin: Option<usize>,
}

impl Default for HologramSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            pixel_pitch: 10e-6,
            wavelength: 630e-9,
            distance: 0.25,
            particles: Vec::new(),
            alpha: 1e-2,
            noise_sigma: 0.0,
            margin: None,
        }
    }
}

impl HologramSpec {
    pub fn margin(&self) -> usize {
        self.margin.unwrap_or(self.image_size / 2)
    }

    /// Side of the computational canvas, `image_size + 2·margin`.
    pub fn canvas_size(&self) -> usize {
        self.image_size + 2 * self.margin()
    }

    /// Kernel radius in pixels, limited so the kernel does not overlap itself on the canvas.
    pub fn kernel_radius(&self) -> usize {
        let wanted = if self.margin() > 0 {
            self.margin()
        } else {
            self.image_size / 2
        };
        wanted.min((self.canvas_size() - 1) / 2)
    }

    /// The dimensionless chirp rate `π·pitch²/(λz)`, the phase per squared pixel.
    pub fn chirp_rate(&self) -> f64 {
        std::f64::consts::PI * self.pixel_pitch * self.pixel_pitch / (self.wavelength * self.distance)
    }

    /// Canvas index of a particle.
    pub fn canvas_index(&self, p: &Particle) -> usize {
        let m = self.margin();
        (p.y + m) * self.canvas_size() + p.x + m
    }

    fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::invalid("image_size", "must be positive"));
        }
        for (name, value) in [
            ("pixel_pitch", self.pixel_pitch),
            ("wavelength", self.wavelength),
            ("distance", self.distance),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::invalid(name, format!("must be positive, got {value}")));
            }
        }
        if let Some(p) = self
            .particles
            .iter()
            .find(|p| p.x >= self.image_size || p.y >= self.image_size)
        {
            return Err(Error::invalid(
                "particles",
                format!("({}, {}) lies outside the {}-pixel image", p.x, p.y, self.image_size),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }
}

/// `κ_z(x, y) = sin(π(x² + y²)/(λz)) / (λz)` at physical coordinates in meters.
pub fn fresnel_value(x: f64, y: f64, wavelength: f64, distance: f64) -> f64 {
    let lz = wavelength * distance;
    (std::f64::consts::PI * (x * x + y * y) / lz).sin() / lz
}

/// Fresnel kernel sampled on a centered `(2R + 1)²` pixel grid and normalized
/// to unit ℓ² norm.
#[derive(Clone, Debug)]
pub struct FresnelKernel {
    pub radius: usize,
    /// Row-major samples, `(2R + 1)²` of them, center at index `(R, R)`.
    pub values: Vec<f64>,
    /// ℓ² norm of the raw samples before normalization.
    pub raw_norm: f64,
}

impl FresnelKernel {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Sample at pixel offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.values[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }
}

pub fn fresnel_kernel(spec: &HologramSpec) -> Result<FresnelKernel> {
    spec.validate()?;
    let radius = spec.kernel_radius();
    let r = radius as isize;
    let pitch = spec.pixel_pitch;
    let mut values = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            values.push(fresnel_value(
                dx as f64 * pitch,
                dy as f64 * pitch,
                spec.wavelength,
                spec.distance,
            ));
        }
    }
    let raw_norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if raw_norm == 0.0 {
        return Err(Error::invalid("hologram", "kernel vanishes on the sampling grid"));
    }
    for v in &mut values {
        *v /= raw_norm;
    }
    Ok(FresnelKernel {
        radius,
        values,
        raw_norm,
    })
}

/// Builds the canvas convolution operator, the particle image (canvas-sized)
/// and `g = K·truth + noise`.
pub fn make_hologram_problem(spec: &HologramSpec, seed: u64) -> Result<(Problem, Vector)> {
    let kernel = fresnel_kernel(spec)?;
    let side = spec.canvas_size();
    let r = kernel.radius as isize;
    let mut wrapped = vec![0.0; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            let i = dy.rem_euclid(side as isize) as usize;
            let j = dx.rem_euclid(side as isize) as usize;
            wrapped[i * side + j] = kernel.at(dx, dy);
        }
    }
    let op = LinearOperator::circular_conv_2d(side, side, wrapped)?;

    let mut truth = Vector::zeros(side * side);
    for p in &spec.particles {
        truth[spec.canvas_index(p)] += p.amplitude;
    }
    let mut g = op.apply(&truth)?;
    add_noise(&mut g, spec.noise_sigma, &mut rng(seed))?;
    Ok((Problem::new(op, g, spec.alpha)?, truth))
}

/// Number of particles within `radius` pixels (Euclidean) of one of the
/// `particles.len()` largest-magnitude coefficients of a canvas image.
pub fn localized_particles(spec: &HologramSpec, canvas: &Vector, radius: f64) -> usize {
    let side = spec.canvas_size();
    let margin = spec.margin() as f64;
    let mut order: Vec<usize> = (0..canvas.len()).collect();
    order.sort_by(|&a, &b| canvas[b].abs().total_cmp(&canvas[a].abs()).then(a.cmp(&b)));
    let peaks: Vec<(f64, f64)> = order
        .into_iter()
        .take(spec.particles.len())
        .map(|i| ((i % side) as f64 - margin, (i / side) as f64 - margin))
        .collect();
    spec.particles
        .iter()
        .filter(|p| {
            peaks
                .iter()
                .any(|&(x, y)| (x - p.x as f64).hypot(y - p.y as f64) <= radius)
        })
        .count()
}

/// `count` particles of unit amplitude at distinct random pixels, pairwise at
/// least `min_separation` pixels apart (Euclidean).
pub fn random_particles(count: usize, image_size: usize, min_separation: f64, seed: u64) -> Result<Vec<Particle>> {
    let mut rng = rng(seed);
    let mut out: Vec<Particle> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * (count + 1) {
            return Err(Error::invalid(
                "particles",
                format!("cannot place {count} particles {min_separation} px apart in {image_size}²"),
            ));
        }
        let candidate = Particle {
            x: rng.random_range(0..image_size),
            y: rng.random_range(0..image_size),
            amplitude: 1.0,
        };
        let clear = out.iter().all(|p| {
            let dx = p.x as f64 - candidate.x as f64;
            let dy = p.y as f64 - candidate.y as f64;
            (dx * dx + dy * dy).sqrt() >= min_separation
        });
        if clear {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// Gaussian `m × n` matrix scaled to unit spectral norm, a random `sparsity`-sparse
/// ground truth with amplitudes of magnitude in `[0.5, 1.5)`, and noiseless data.
pub fn make_random_fbi_problem(
    m: usize,
    n: usize,
    sparsity: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Problem, Vector)> {
    if m == 0 || n == 0 || m > 64 || n > 64 {
        return Err(Error::invalid("shape", format!("{m}x{n} must lie within 1..=64")));
    }
    if 2 * sparsity > m {
        return Err(Error::invalid(
            "sparsity",
            format!("{sparsity} exceeds m/2 = {}", m / 2),
        ));
    }
    let mut rng = rng(seed);
    let mut k = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let top = k.singular_values().max();
    k /= top;

    let mut truth = Vector::zeros(n);
    for i in index::sample(&mut rng, n, sparsity) {
        let magnitude: f64 = rng.random_range(0.5..1.5);
        truth[i] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    }
    let g = &k * &truth;
    Ok((Problem::new(LinearOperator::dense(k)?, g, alpha)?, truth))
}
