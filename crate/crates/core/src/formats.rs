//! The four radar data formats behind one trait, registered by name.
//!
//! | name        | azimuth processing | grid      |
//! |-------------|--------------------|-----------|
//! | data-fft    | zero-padded FFT    | polar     |
//! | img-fft     | zero-padded FFT    | Cartesian |
//! | data-music  | MUSIC              | polar     |
//! | img-music   | MUSIC              | Cartesian |

use std::sync::OnceLock;

use crate::dsp::{
    music_map, polar_to_cartesian, range_azimuth_fft, BevParams, FftParams, MusicParams,
};
use crate::error::{Error, Result};
use crate::types::{BevImage, PolarMap, RadarCube};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessParams {
    pub fft: FftParams,
    pub music: MusicParams,
    pub bev: BevParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormatOutput {
    Polar(PolarMap),
    Bev(BevImage),
}

/// One cube plus lazily computed polar maps, so several formats of the same
/// frame share their FFT/MUSIC work.
pub struct FrameData<'a> {
    pub cube: &'a RadarCube,
    pub params: &'a ProcessParams,
    fft: OnceLock<PolarMap>,
    music: OnceLock<PolarMap>,
}

impl<'a> FrameData<'a> {
    pub fn new(cube: &'a RadarCube, params: &'a ProcessParams) -> Self {
        FrameData {
            cube,
            params,
            fft: OnceLock::new(),
            music: OnceLock::new(),
        }
    }

    pub fn fft_map(&self) -> Result<&PolarMap> {
        if let Some(m) = self.fft.get() {
            return Ok(m);
        }
        let m = range_azimuth_fft(self.cube, &self.params.fft)?;
        Ok(self.fft.get_or_init(|| m))
    }

    pub fn music_map(&self) -> Result<&PolarMap> {
        if let Some(m) = self.music.get() {
            return Ok(m);
        }
        let m = music_map(self.cube, &self.params.music)?;
        Ok(self.music.get_or_init(|| m))
    }
}

pub trait RadarFormat: Send + Sync {
    fn name(&self) -> &'static str;
    fn process(&self, frame: &FrameData<'_>) -> Result<FormatOutput>;
}

struct DataFft;
struct ImgFft;
struct DataMusic;
struct ImgMusic;

impl RadarFormat for DataFft {
    fn name(&self) -> &'static str {
        "data-fft"
    }
    fn process(&self, frame: &FrameData<'_>) -> Result<FormatOutput> {
        Ok(FormatOutput::Polar(frame.fft_map()?.clone()))
    }
}

impl RadarFormat for ImgFft {
    fn name(&self) -> &'static str {
        "img-fft"
    }
    fn process(&self, frame: &FrameData<'_>) -> Result<FormatOutput> {
        Ok(FormatOutput::Bev(polar_to_cartesian(frame.fft_map()?, &frame.params.bev)?))
    }
}

impl RadarFormat for DataMusic {
    fn name(&self) -> &'static str {
        "data-music"
    }
    fn process(&self, frame: &FrameData<'_>) -> Result<FormatOutput> {
        Ok(FormatOutput::Polar(frame.music_map()?.clone()))
    }
}

impl RadarFormat for ImgMusic {
    fn name(&self) -> &'static str {
        "img-music"
    }
    fn process(&self, frame: &FrameData<'_>) -> Result<FormatOutput> {
        Ok(FormatOutput::Bev(polar_to_cartesian(frame.music_map()?, &frame.params.bev)?))
    }
}

pub struct FormatRegistry {
    formats: Vec<Box<dyn RadarFormat>>,
}

impl Default for FormatRegistry {
    fn default() -> Self {
        let mut r = FormatRegistry { formats: Vec::new() };
        r.register(Box::new(DataFft));
        r.register(Box::new(DataMusic));
        r.register(Box::new(ImgFft));
        r.register(Box::new(ImgMusic));
        r
    }
}

impl FormatRegistry {
    pub fn empty() -> Self {
        FormatRegistry { formats: Vec::new() }
    }

    /// Registering an existing name replaces the earlier entry.
    pub fn register(&mut self, format: Box<dyn RadarFormat>) {
        self.formats.retain(|f| f.name() != format.name());
        self.formats.push(format);
    }

    pub fn get(&self, name: &str) -> Result<&dyn RadarFormat> {
        self.formats
            .iter()
            .find(|f| f.name() == name)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::UnknownFormat(name.to_string()))
    }

    /// Names in registration order.
    pub fn names(&self) -> Vec<&'static str> {
        self.formats.iter().map(|f| f.name()).collect()
    }
}
