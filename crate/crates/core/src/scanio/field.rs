use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which C-AFM signal a raster holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Morphology,
    Current,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::Morphology => 0,
            Channel::Current => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Channel> {
        match code {
            0 => Some(Channel::Morphology),
            1 => Some(Channel::Current),
            _ => None,
        }
    }

    pub fn default_units(self) -> &'static str {
        match self {
            Channel::Morphology => "nm",
            Channel::Current => "nA",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Morphology => "morphology",
            Channel::Current => "current",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "morphology" => Ok(Channel::Morphology),
            "current" => Ok(Channel::Current),
            other => Err(Error::Validation(format!("unknown channel {other:?}"))),
        }
    }
}

/// Whether values are in physical units or min-max mapped to `[0, 1]`.
///
/// A normalised field remembers the raw range so it can be mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormState {
    Raw,
    Normalized { min: f32, max: f32 },
}

/// Scanned area in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalExtent {
    pub width_um: f64,
    pub height_um: f64,
}

impl PhysicalExtent {
    pub fn new(width_um: f64, height_um: f64) -> Result<Self> {
        if !(width_um > 0.0 && height_um > 0.0 && width_um.is_finite() && height_um.is_finite()) {
            return Err(Error::Validation(format!(
                "physical extent must be positive, got {width_um} x {height_um} um"
            )));
        }
        Ok(PhysicalExtent {
            width_um,
            height_um,
        })
    }

    pub fn square(side_um: f64) -> Result<Self> {
        Self::new(side_um, side_um)
    }

    pub fn area_um2(&self) -> f64 {
        self.width_um * self.height_um
    }
}

/// A single-channel raster with physical metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanField {
    height: usize,
    width: usize,
    data: Vec<f32>,
    channel: Channel,
    extent: PhysicalExtent,
    units: String,
    norm: NormState,
    sample_id: String,
}

impl ScanField {
    /// Raw field with a 1 µm × 1 µm extent and the channel's default units.
    pub fn new(channel: Channel, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty field {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width} field needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at ({}, {})",
                data[i],
                i / width,
                i % width
            )));
        }
        Ok(ScanField {
            height,
            width,
            data,
            channel,
            extent: PhysicalExtent {
                width_um: 1.0,
                height_um: 1.0,
            },
            units: channel.default_units().to_string(),
            norm: NormState::Raw,
            sample_id: String::new(),
        })
    }

    pub fn zeros(channel: Channel, height: usize, width: usize) -> Result<Self> {
        Self::new(channel, height, width, vec![0.0; height * width])
    }

    pub fn from_fn(
        channel: Channel,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(channel, height, width, data)
    }

    pub fn with_extent(mut self, extent: PhysicalExtent) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn with_sample_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = id.into();
        self
    }

    /// Marks the field as normalised with the given raw range, checking the
    /// `[0, 1]` invariant.
    pub fn with_norm_state(mut self, norm: NormState) -> Result<Self> {
        if let NormState::Normalized { min, max } = norm {
            if !(min <= max) || !min.is_finite() || !max.is_finite() {
                return Err(Error::Validation(format!("bad normalisation range ({min}, {max})")));
            }
            if min == max && self.data.iter().any(|&v| v != 0.0) {
                return Err(Error::Validation(
                    "degenerate normalisation range requires an all-zero field".into(),
                ));
            }
            if self.data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Validation("normalised values must lie in [0, 1]".into()));
            }
        }
        self.norm = norm;
        Ok(self)
    }

    /// Same metadata, new values and dimensions.
    pub fn with_data(&self, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let mut out = ScanField::new(self.channel, height, width, data)?;
        out.extent = self.extent;
        out.units = self.units.clone();
        out.sample_id = self.sample_id.clone();
        out.norm = self.norm;
        Ok(out)
    }

    pub(crate) fn replace_data_unchecked(&self, height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        ScanField {
            height,
            width,
            data,
            channel: self.channel,
            extent: self.extent,
            units: self.units.clone(),
            norm: self.norm,
            sample_id: self.sample_id.clone(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn extent(&self) -> PhysicalExtent {
        self.extent
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn norm_state(&self) -> NormState {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.norm, NormState::Normalized { .. })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Pixel pitch `(x, y)` in micrometres.
    pub fn pitch_um(&self) -> (f64, f64) {
        (
            self.extent.width_um / self.width as f64,
            self.extent.height_um / self.height as f64,
        )
    }
}

/// Co-registered morphology and current rasters of one sample area.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPair {
    pub morphology: ScanField,
    pub current: ScanField,
    pub sample_id: String,
}

impl ScanPair {
    pub fn new(morphology: ScanField, current: ScanField, sample_id: impl Into<String>) -> Result<Self> {
        if morphology.channel() != Channel::Morphology || current.channel() != Channel::Current {
            return Err(Error::Validation("scan pair channels are swapped or duplicated".into()));
        }
        if morphology.dims() != current.dims() {
            return Err(Error::Dimension(format!(
                "morphology {:?} vs current {:?}",
                morphology.dims(),
                current.dims()
            )));
        }
        if morphology.extent() != current.extent() {
            return Err(Error::Validation("morphology and current extents differ".into()));
        }
        Ok(ScanPair {
            morphology,
            current,
            sample_id: sample_id.into(),
        })
    }

    pub fn channel(&self, channel: Channel) -> &ScanField {
        match channel {
            Channel::Morphology => &self.morphology,
            Channel::Current => &self.current,
        }
    }
}

/// Per-axis undersampling factor σ of a sparse scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SparsityFactor {
    X2,
    X4,
    X8,
}

impl SparsityFactor {
    pub const ALL: [SparsityFactor; 3] = [SparsityFactor::X2, SparsityFactor::X4, SparsityFactor::X8];

    pub fn new(sigma: u32) -> Result<Self> {
        match sigma {
            2 => Ok(SparsityFactor::X2),
            4 => Ok(SparsityFactor::X4),
            8 => Ok(SparsityFactor::X8),
            other => Err(Error::Validation(format!(
                "sparsity factor must be 2, 4 or 8, got {other}"
            ))),
        }
    }

    pub fn get(self) -> usize {
        match self {
            SparsityFactor::X2 => 2,
            SparsityFactor::X4 => 4,
            SparsityFactor::X8 => 8,
        }
    }

    /// Number of ×2 sub-pixel stages needed to reach this factor.
    pub fn doublings(self) -> usize {
        self.get().trailing_zeros() as usize
    }
}

impl TryFrom<u32> for SparsityFactor {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        SparsityFactor::new(v)
    }
}

impl From<SparsityFactor> for u32 {
    fn from(s: SparsityFactor) -> u32 {
        s.get() as u32
    }
}

impl std::fmt::Display for SparsityFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{}", self.get())
    }
}
