use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One simulated camera. The sender clock reads `hub_time + clock_offset_us`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraSpec {
    pub camera_id: u16,
    pub frame_period_us: u64,
    pub clock_offset_us: i64,
    pub jitter_std_us: f64,
    pub drop_probability: f64,
}

impl CameraSpec {
    pub fn new(camera_id: u16, frame_period_us: u64) -> Self {
        Self {
            camera_id,
            frame_period_us,
            clock_offset_us: 0,
            jitter_std_us: 0.0,
            drop_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_period_us == 0 {
            return Err(Error::InvalidArgument(format!("camera {}: frame period must be > 0", self.camera_id)));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::InvalidArgument(format!(
                "camera {}: drop probability {} outside [0, 1)",
                self.camera_id, self.drop_probability
            )));
        }
        if !(self.jitter_std_us >= 0.0) {
            return Err(Error::InvalidArgument(format!("camera {}: negative jitter", self.camera_id)));
        }
        Ok(())
    }
}

impl fmt::Display for CameraSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "id={} period_us={} offset_us={} jitter_us={} drop_prob={}",
            self.camera_id, self.frame_period_us, self.clock_offset_us, self.jitter_std_us, self.drop_probability
        )
    }
}

impl FromStr for CameraSpec {
    type Err = Error;

    /// `id=1 period_us=33333 offset_us=500 jitter_us=200 drop_prob=0.05`;
    /// fields may be separated by spaces or commas.
    fn from_str(line: &str) -> Result<Self> {
        let mut spec = CameraSpec::new(0, 0);
        let mut have_id = false;
        let mut have_period = false;
        for field in line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("camera field {field:?} is not key=value")))?;
            let bad = |_| Error::Format(format!("bad value for {key}: {value:?}"));
            match key {
                "id" => {
                    spec.camera_id = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                    have_id = true;
                }
                "period_us" => {
                    spec.frame_period_us = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                    have_period = true;
                }
                "offset_us" => {
                    spec.clock_offset_us = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "jitter_us" => {
                    spec.jitter_std_us = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "drop_prob" => {
                    spec.drop_probability = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                other => return Err(Error::Format(format!("unknown camera field {other:?}"))),
            }
        }
        if !have_id || !have_period {
            return Err(Error::Format(format!("camera line needs id and period_us: {line:?}")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One camera per non-empty line; `#` starts a comment.
pub fn parse_camera_config(text: &str) -> Result<Vec<CameraSpec>> {
    let mut out: Vec<CameraSpec> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let spec: CameraSpec = line.parse()?;
        if out.iter().any(|c| c.camera_id == spec.camera_id) {
            return Err(Error::Format(format!("duplicate camera id {}", spec.camera_id)));
        }
        out.push(spec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config() {
        let text = "# rig\nid=1 period_us=33333 offset_us=-250 jitter_us=100 drop_prob=0.1\n\nid=2,period_us=33333\n";
        let cams = parse_camera_config(text).unwrap();
        assert_eq!(cams.len(), 2);
        assert_eq!(cams[0].clock_offset_us, -250);
        assert_eq!(cams[1].drop_probability, 0.0);
        let back: CameraSpec = cams[0].to_string().parse().unwrap();
        assert_eq!(back, cams[0]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!("id=1".parse::<CameraSpec>().is_err());
        assert!("id=1 period_us=0".parse::<CameraSpec>().is_err());
        assert!("id=1 period_us=10 drop_prob=1.0".parse::<CameraSpec>().is_err());
        assert!("id=1 period_us=10 colour=red".parse::<CameraSpec>().is_err());
        assert!(parse_camera_config("id=1 period_us=5\nid=1 period_us=5").is_err());
    }
}
