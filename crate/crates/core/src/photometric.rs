//! Linear-response image formation `I(x) = t * V(x) * B(x)`, vignette
//! estimation, irradiance correction and illuminance-driven exposure control.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Vignette values below this mark a pixel as unusable for correction.
pub const MIN_VIGNETTE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PhotometricError {
    #[error("pixel ({x}, {y}) has no texture correspondence")]
    MissingCorrespondence { x: usize, y: usize },
    #[error("pixel ({x}, {y}) is not observed in any image")]
    UnobservedPixel { x: usize, y: usize },
    #[error("need at least {needed} images, got {got}")]
    TooFewImages { needed: usize, got: usize },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("no unsaturated exposure samples")]
    AllSaturated,
    #[error("invalid exposure model: {0}")]
    InvalidModel(String),
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("view set: {0}")]
    ViewSet(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, PhotometricError>;

/// Row-major single-channel image with real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(PhotometricError::SizeMismatch(format!(
                "{}x{} image with {} values",
                width,
                height,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            values: vec![v; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Per-pixel attenuation in `[0, 1]`.
pub type VignetteMap = Image;

/// Irradiance of a gridded planar target.
pub type PlaneTexture = Image;

/// For every pixel the texel it observes, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub width: usize,
    pub height: usize,
    pub texel: Vec<Option<usize>>,
}

impl Correspondence {
    /// Nearest-texel lookup through a pixel-to-plane homography.
    pub fn from_homography(
        width: usize,
        height: usize,
        h: &Matrix3<f64>,
        texture_width: usize,
        texture_height: usize,
    ) -> Self {
        let mut texel = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = h * Vector3::new(x as f64, y as f64, 1.0);
                let hit = if p.z.abs() > 1e-12 {
                    let u = (p.x / p.z).round();
                    let v = (p.y / p.z).round();
                    if u >= 0.0 && v >= 0.0 && (u as usize) < texture_width && (v as usize) < texture_height {
                        Some(v as usize * texture_width + u as usize)
                    } else {
                        None
                    }
                } else {
                    None
                };
                texel.push(hit);
            }
        }
        Self { width, height, texel }
    }
}

/// One calibration image with its exposure time and texel lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationView {
    pub exposure_s: f64,
    pub image: Image,
    pub correspondence: Correspondence,
}

/// `I(x) = t * V(x) * B(c(x))`; every pixel must see the target.
pub fn render_image(
    texture: &PlaneTexture,
    exposure_s: f64,
    vignette: &VignetteMap,
    correspondence: &Correspondence,
) -> Result<Image> {
    if (vignette.width, vignette.height) != (correspondence.width, correspondence.height) {
        return Err(PhotometricError::SizeMismatch("vignette vs correspondence".into()));
    }
    let mut values = Vec::with_capacity(vignette.values.len());
    for (i, c) in correspondence.texel.iter().enumerate() {
        let p = c.filter(|p| *p < texture.values.len()).ok_or(PhotometricError::MissingCorrespondence {
            x: i % vignette.width,
            y: i / vignette.width,
        })?;
        values.push(exposure_s * vignette.values[i] * texture.values[p]);
    }
    Image::new(vignette.width, vignette.height, values)
}

/// Irradiance estimate with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedImage {
    pub image: Image,
    /// False where `V(x) < MIN_VIGNETTE`; those values are set to zero.
    pub valid: Vec<bool>,
}

/// `B(x) = I(x) / (t V(x))` on pixels with enough vignette response.
pub fn correct_image(image: &Image, exposure_s: f64, vignette: &VignetteMap) -> Result<CorrectedImage> {
    if !(exposure_s > 0.0) {
        return Err(PhotometricError::InvalidModel(format!("exposure {exposure_s} must be positive")));
    }
    if (image.width, image.height) != (vignette.width, vignette.height) {
        return Err(PhotometricError::SizeMismatch("image vs vignette".into()));
    }
    let mut valid = Vec::with_capacity(image.values.len());
    let values = image
        .values
        .iter()
        .zip(&vignette.values)
        .map(|(i, v)| {
            let ok = *v >= MIN_VIGNETTE;
            valid.push(ok);
            if ok {
                i / (exposure_s * v)
            } else {
                0.0
            }
        })
        .collect();
    Ok(CorrectedImage {
        image: Image::new(image.width, image.height, values)?,
        valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VignetteOptions {
    pub max_iterations: usize,
    /// Stop when the relative decrease of the objective falls below this.
    pub relative_tolerance: f64,
}

impl Default for VignetteOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VignetteEstimate {
    /// Normalized so that its maximum is 1, clamped to `[0, 1]`.
    pub vignette: VignetteMap,
    /// Scaled by the same factor so that `V * B` is unchanged.
    pub texture: PlaneTexture,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every half-step (texture update, then vignette update).
    pub objective_history: Vec<f64>,
}

struct Observation {
    pixel: usize,
    texel: usize,
    exposure: f64,
    value: f64,
}

fn objective(obs: &[Observation], v: &[f64], b: &[f64]) -> f64 {
    obs.iter()
        .map(|o| (o.value - o.exposure * v[o.pixel] * b[o.texel]).powi(2))
        .sum()
}

/// Alternating closed-form least squares on texture and vignette.
///
/// Each half-step solves exactly for one factor with the other fixed, so the
/// objective never increases.
pub fn estimate_vignette(
    views: &[CalibrationView],
    texture_width: usize,
    texture_height: usize,
    options: &VignetteOptions,
) -> Result<VignetteEstimate> {
    if views.len() < 2 {
        return Err(PhotometricError::TooFewImages {
            needed: 2,
            got: views.len(),
        });
    }
    let (width, height) = (views[0].image.width, views[0].image.height);
    let n_pix = width * height;
    let n_tex = texture_width * texture_height;
    let mut obs = Vec::new();
    for view in views {
        let c = &view.correspondence;
        if (view.image.width, view.image.height) != (width, height) || (c.width, c.height) != (width, height) {
            return Err(PhotometricError::SizeMismatch("views differ in size".into()));
        }
        if !(view.exposure_s > 0.0) {
            return Err(PhotometricError::InvalidModel("exposure must be positive".into()));
        }
        for (pixel, texel) in c.texel.iter().enumerate() {
            if let Some(texel) = texel.filter(|t| *t < n_tex) {
                obs.push(Observation {
                    pixel,
                    texel,
                    exposure: view.exposure_s,
                    value: view.image.values[pixel],
                });
            }
        }
    }
    let mut seen = vec![false; n_pix];
    for o in &obs {
        seen[o.pixel] = true;
    }
    if let Some(p) = seen.iter().position(|s| !s) {
        return Err(PhotometricError::UnobservedPixel {
            x: p % width,
            y: p / width,
        });
    }

    let mut v = vec![1.0; n_pix];
    let mut b = vec![0.0; n_tex];
    let mut num_b = vec![0.0; n_tex];
    let mut den_b = vec![0.0; n_tex];
    let mut num_v = vec![0.0; n_pix];
    let mut den_v = vec![0.0; n_pix];
    let mut history = Vec::new();
    let mut previous = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        num_b.iter_mut().for_each(|x| *x = 0.0);
        den_b.iter_mut().for_each(|x| *x = 0.0);
        for o in &obs {
            let a = o.exposure * v[o.pixel];
            num_b[o.texel] += a * o.value;
            den_b[o.texel] += a * a;
        }
        for ((bt, n), d) in b.iter_mut().zip(&num_b).zip(&den_b) {
            if *d > 0.0 {
                *bt = n / d;
            }
        }
        history.push(objective(&obs, &v, &b));

        num_v.iter_mut().for_each(|x| *x = 0.0);
        den_v.iter_mut().for_each(|x| *x = 0.0);
        for o in &obs {
            let a = o.exposure * b[o.texel];
            num_v[o.pixel] += a * o.value;
            den_v[o.pixel] += a * a;
        }
        for ((vp, n), d) in v.iter_mut().zip(&num_v).zip(&den_v) {
            if *d > 0.0 {
                *vp = n / d;
            }
        }
        let current = objective(&obs, &v, &b);
        history.push(current);

        let scale: f64 = obs.iter().map(|o| o.value * o.value).sum();
        if current <= scale * 1e-30
            || (previous.is_finite() && previous - current <= options.relative_tolerance * previous)
        {
            converged = true;
            break;
        }
        previous = current;
    }

    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if vmax > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x / vmax).clamp(0.0, 1.0));
        b.iter_mut().for_each(|x| *x *= vmax);
    }
    Ok(VignetteEstimate {
        vignette: Image::new(width, height, v)?,
        texture: Image::new(texture_width, texture_height, b)?,
        iterations,
        converged,
        objective_history: history,
    })
}

/// `t(L) = clamp(k / L, t_min, t_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureModel {
    /// lux * seconds
    pub k: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl ExposureModel {
    pub fn new(k: f64, t_min: f64, t_max: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(PhotometricError::InvalidModel(format!("k = {k} must be positive")));
        }
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(PhotometricError::InvalidModel(format!(
                "need 0 < t_min < t_max, got {t_min}, {t_max}"
            )));
        }
        Ok(Self { k, t_min, t_max })
    }

    pub fn predict(&self, lux: f64) -> f64 {
        if lux <= 0.0 {
            return self.t_max;
        }
        (self.k / lux).clamp(self.t_min, self.t_max)
    }
}

/// Least-squares `k` over samples strictly inside `(t_min, t_max)`.
///
/// `samples` are `(illuminance, exposure seconds)`.
pub fn fit_exposure_control(samples: &[(f64, f64)], t_min: f64, t_max: f64) -> Result<ExposureModel> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for &(lux, t) in samples {
        if lux > 0.0 && t > t_min && t < t_max {
            num += t / lux;
            den += 1.0 / (lux * lux);
            used += 1;
        }
    }
    if used == 0 {
        return Err(PhotometricError::AllSaturated);
    }
    ExposureModel::new(num / den, t_min, t_max)
}

/// Reads a binary (P5) PGM and normalizes values by its maxval.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let err = |m: &str| PhotometricError::Pgm(m.to_string());
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(err("not a binary PGM (P5)"));
    }
    let mut number = |name: &str| -> Result<usize> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err(&format!("bad {name}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(err("maxval out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bpp))
        .ok_or_else(|| err("image too large"))?;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() < n {
        return Err(err("truncated raster"));
    }
    let values = data[..n]
        .chunks_exact(bpp)
        .map(|c| {
            let raw = if bpp == 2 {
                u16::from_be_bytes([c[0], c[1]]) as usize
            } else {
                c[0] as usize
            };
            (raw.min(maxval)) as f64 / maxval as f64
        })
        .collect();
    Image::new(width, height, values)
}

/// 16-bit binary PGM, `round(65535 * v)` with `v` clamped to `[0, 1]`.
pub fn format_pgm16(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width, image.height).into_bytes();
    for v in &image.values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn load_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|source| PhotometricError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pgm(&bytes)
}

pub fn write_pgm16(path: &Path, image: &Image) -> Result<()> {
    let io = |source| PhotometricError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&format_pgm16(image)).map_err(io)
}

/// Calibration views on disk: `views.txt` lists the texture size and, per
/// `[viewN]` section, the image file, exposure and pixel-to-plane homography.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub texture_width: usize,
    pub texture_height: usize,
    pub views: Vec<(CalibrationView, Matrix3<f64>)>,
}

pub const VIEWS_FILE: &str = "views.txt";

pub fn write_view_set(dir: &Path, set: &ViewSet) -> Result<()> {
    use std::fmt::Write as _;
    let io = |source| PhotometricError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut index = String::new();
    writeln!(index, "[texture]\nwidth = {}\nheight = {}", set.texture_width, set.texture_height).unwrap();
    for (k, (view, h)) in set.views.iter().enumerate() {
        let name = format!("view{k}.pgm");
        write_pgm16(&dir.join(&name), &view.image)?;
        let hs: Vec<String> = h.transpose().iter().map(|v| crate::ingest::fmt_exact(*v)).collect();
        writeln!(
            index,
            "[view{k}]\nimage = {name}\nexposure_s = {}\nhomography = {}",
            crate::ingest::fmt_exact(view.exposure_s),
            hs.join(", ")
        )
        .unwrap();
    }
    let path = dir.join(VIEWS_FILE);
    fs::write(&path, index).map_err(|source| PhotometricError::Io { path, source })
}

/// One `[viewN]` entry of `views.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEntry {
    pub image: String,
    pub exposure_s: f64,
    pub homography: Matrix3<f64>,
}

/// Parsed `views.txt` without the images.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewIndex {
    pub texture_width: usize,
    pub texture_height: usize,
    pub views: Vec<ViewEntry>,
}

pub fn parse_view_index(bytes: &[u8]) -> Result<ViewIndex> {
    let bad = |e: crate::ingest::IngestError| PhotometricError::ViewSet(e.to_string());
    let ini = crate::ingest::Ini::parse(bytes).map_err(bad)?;
    let tex = ini.require("texture").map_err(bad)?;
    let size = |key: &str| -> Result<usize> {
        let v = tex.i64(key).map_err(bad)?;
        usize::try_from(v)
            .ok()
            .filter(|v| *v > 0 && *v <= 1 << 16)
            .ok_or_else(|| PhotometricError::ViewSet(format!("texture {key} = {v} out of range")))
    };
    let (texture_width, texture_height) = (size("width")?, size("height")?);
    let mut views = Vec::new();
    for section in ini.sections().iter().filter(|s| s.name.starts_with("view")) {
        let (file, _) = section.require("image").map_err(bad)?;
        if file.contains('/') || file.contains('\\') {
            return Err(PhotometricError::ViewSet(format!("image path `{file}` must be a plain file name")));
        }
        let exposure_s = section.f64("exposure_s").map_err(bad)?;
        if !(exposure_s > 0.0) {
            return Err(PhotometricError::InvalidModel(format!("exposure {exposure_s} must be positive")));
        }
        let h = section.f64s::<9>("homography").map_err(bad)?;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(PhotometricError::ViewSet(format!("[{}] homography is not finite", section.name)));
        }
        views.push(ViewEntry {
            image: file.to_string(),
            exposure_s,
            homography: Matrix3::from_row_slice(&h),
        });
    }
    if views.is_empty() {
        return Err(PhotometricError::TooFewImages { needed: 2, got: 0 });
    }
    Ok(ViewIndex {
        texture_width,
        texture_height,
        views,
    })
}

pub fn load_view_set(dir: &Path) -> Result<ViewSet> {
    let path = dir.join(VIEWS_FILE);
    let bytes = fs::read(&path).map_err(|source| PhotometricError::Io { path: path.clone(), source })?;
    let index = parse_view_index(&bytes).map_err(|e| match e {
        PhotometricError::ViewSet(m) => PhotometricError::ViewSet(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let mut views = Vec::new();
    for entry in index.views {
        let image = load_pgm(&dir.join(&entry.image))?;
        let correspondence = Correspondence::from_homography(
            image.width,
            image.height,
            &entry.homography,
            index.texture_width,
            index.texture_height,
        );
        views.push((
            CalibrationView {
                exposure_s: entry.exposure_s,
                image,
                correspondence,
            },
            entry.homography,
        ));
    }
    Ok(ViewSet {
        texture_width: index.texture_width,
        texture_height: index.texture_height,
        views,
    })
}

/// Radial falloff `1 - strength * r^2` with `r` normalized to the image
/// half-diagonal.
pub fn radial_vignette(width: usize, height: usize, strength: f64) -> VignetteMap {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let r_max2 = cx * cx + cy * cy;
    let mut values: Vec<f64> = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let r2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / r_max2.max(1.0);
            1.0 - strength * r2
        })
        .collect();
    // brightest pixel is exactly 1, matching the estimator's normalization
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Image {
        width,
        height,
        values,
    }
}
