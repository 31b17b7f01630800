//! Geometric multipath channels for the BS→RIS and RIS→UE links.
//!
//! The surface is a uniform planar array of `n_h × n_v` elements at
//! half-wavelength spacing. Element `(p, q)` lives at flat index
//! `p * n_v + q`, which makes the beamspace dictionary the Kronecker product
//! `D_h ⊗ D_v` of two unitary DFT matrices.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::{CMatrix, CVector, Error, Result, C64};

/// Planar surface dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RisGeometry {
    n_h: usize,
    n_v: usize,
}

impl RisGeometry {
    pub fn new(n_h: usize, n_v: usize) -> Result<Self> {
        if n_h == 0 || n_v == 0 {
            return Err(Error::domain(format!(
                "surface needs at least one element per axis, got {n_h}x{n_v}"
            )));
        }
        Ok(Self { n_h, n_v })
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// Total element count `N = n_h * n_v`.
    pub fn n(&self) -> usize {
        self.n_h * self.n_v
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    /// Azimuth in radians, within `[-π/2, π/2]`.
    pub azimuth: f64,
    /// Elevation in radians, within `[-π/2, π/2]`.
    pub elevation: f64,
}

/// The propagation paths of one link together with its path loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub paths: Vec<Path>,
    pub path_loss: f64,
}

impl PathParams {
    pub fn count(&self) -> usize {
        self.paths.len()
    }
}

/// Unitary DFT dictionary mapping beamspace to the element domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceDictionary {
    geometry: RisGeometry,
    matrix: CMatrix,
}

impl BeamspaceDictionary {
    pub fn geometry(&self) -> RisGeometry {
        self.geometry
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `D · z`
    pub fn to_spatial(&self, beamspace: &CVector) -> Result<CVector> {
        Error::check_dim("beamspace vector", self.matrix.ncols(), beamspace.len())?;
        Ok(&self.matrix * beamspace)
    }

    /// `Dᴴ · h`
    pub fn to_beamspace(&self, spatial: &CVector) -> Result<CVector> {
        Error::check_dim("spatial vector", self.matrix.nrows(), spatial.len())?;
        Ok(self.matrix.ad_mul(spatial))
    }
}

/// A channel in both the element domain and the beamspace domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub spatial: CVector,
    pub beamspace: CVector,
    pub paths: PathParams,
}

fn check_angle(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value.abs() > FRAC_PI_2 {
        return Err(Error::domain(format!(
            "{name} {value} outside [-π/2, π/2]"
        )));
    }
    Ok(())
}

/// Unit-norm array response of the surface towards `(azimuth, elevation)`.
///
/// Entry `(p, q)` is `exp{jπ(p·sinθ·cosφ + q·sinθ·sinφ)} / √N` with
/// `θ = elevation` and `φ = azimuth`.
pub fn steering_vector(geometry: RisGeometry, azimuth: f64, elevation: f64) -> Result<CVector> {
    check_angle("azimuth", azimuth)?;
    check_angle("elevation", elevation)?;
    let u = elevation.sin() * azimuth.cos();
    let v = elevation.sin() * azimuth.sin();
    let scale = 1.0 / (geometry.n() as f64).sqrt();
    let n_v = geometry.n_v;
    Ok(CVector::from_fn(geometry.n(), |idx, _| {
        let p = (idx / n_v) as f64;
        let q = (idx % n_v) as f64;
        Complex::from_polar(scale, PI * (p * u + q * v))
    }))
}

fn unitary_dft(size: usize) -> CMatrix {
    let scale = 1.0 / (size as f64).sqrt();
    CMatrix::from_fn(size, size, |row, col| {
        // reduce the exponent first so large sizes keep full phase accuracy
        let k = (row * col) % size;
        Complex::from_polar(scale, 2.0 * PI * k as f64 / size as f64)
    })
}

/// `D = D_h ⊗ D_v` for the given surface.
pub fn dft_dictionary(geometry: RisGeometry) -> BeamspaceDictionary {
    let matrix = unitary_dft(geometry.n_h).kronecker(&unitary_dft(geometry.n_v));
    BeamspaceDictionary { geometry, matrix }
}

/// Draws `count` paths with i.i.d. `CN(0, 1/(2·PL))` gains and angles
/// uniform on `[-π/2, π/2]`.
pub fn draw_paths<R: Rng + ?Sized>(rng: &mut R, count: usize, path_loss: f64) -> Result<PathParams> {
    if count == 0 {
        return Err(Error::domain("a link needs at least one path"));
    }
    if !(path_loss > 0.0 && path_loss.is_finite()) {
        return Err(Error::domain(format!("path loss must be positive, got {path_loss}")));
    }
    // each quadrature carries half of the total variance 1/(2 PL)
    let component = Normal::new(0.0, (0.25 / path_loss).sqrt()).expect("finite std");
    let angle = Uniform::new_inclusive(-FRAC_PI_2, FRAC_PI_2).expect("valid range");
    let paths = (0..count)
        .map(|_| {
            let gain = Complex::new(component.sample(rng), component.sample(rng));
            let azimuth = angle.sample(rng);
            let elevation = angle.sample(rng);
            Path {
                gain,
                azimuth,
                elevation,
            }
        })
        .collect();
    Ok(PathParams { paths, path_loss })
}

/// Sums the path responses into the element-domain channel and projects it
/// onto the dictionary.
pub fn assemble_channel(
    paths: PathParams,
    geometry: RisGeometry,
    dictionary: &BeamspaceDictionary,
) -> Result<ChannelRealization> {
    if dictionary.geometry != geometry {
        return Err(Error::Dimension {
            what: "dictionary geometry",
            expected: geometry.n(),
            got: dictionary.geometry.n(),
        });
    }
    let mut spatial = CVector::zeros(geometry.n());
    for path in &paths.paths {
        spatial.axpy(path.gain, &steering_vector(geometry, path.azimuth, path.elevation)?, C64::new(1.0, 0.0));
    }
    let beamspace = dictionary.to_beamspace(&spatial)?;
    Ok(ChannelRealization {
        spatial,
        beamspace,
        paths,
    })
}

/// Angles `(azimuth, elevation)` whose response coincides with dictionary
/// column `k_h * n_v + k_v`, if that grid direction is physically visible
/// (`u² + v² ≤ 1` for the direction cosines).
pub fn grid_angles(geometry: RisGeometry, k_h: usize, k_v: usize) -> Option<(f64, f64)> {
    if k_h >= geometry.n_h || k_v >= geometry.n_v {
        return None;
    }
    let cosine = |k: usize, size: usize| {
        let c = 2.0 * k as f64 / size as f64;
        if c > 1.0 {
            c - 2.0
        } else {
            c
        }
    };
    let u = cosine(k_h, geometry.n_h);
    let v = cosine(k_v, geometry.n_v);
    let radius = u.hypot(v);
    if radius > 1.0 + 1e-12 {
        return None;
    }
    if radius == 0.0 {
        return Some((0.0, 0.0));
    }
    // keep the azimuth in the front half-plane by flipping the elevation sign
    let (azimuth, elevation) = if u >= 0.0 {
        (v.atan2(u), radius.min(1.0).asin())
    } else {
        ((-v).atan2(-u), -radius.min(1.0).asin())
    };
    Some((azimuth, elevation))
}

/// Every visible on-grid direction of the surface as `(column, azimuth, elevation)`.
pub fn visible_grid(geometry: RisGeometry) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for k_h in 0..geometry.n_h {
        for k_v in 0..geometry.n_v {
            if let Some((az, el)) = grid_angles(geometry, k_h, k_v) {
                out.push((k_h * geometry.n_v + k_v, az, el));
            }
        }
    }
    out
}
