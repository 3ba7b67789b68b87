//! Output plumbing: stable float formatting for CSV, content-hashed file
//! writing, and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats like C's `%.{sig}g`: `sig` significant digits, trailing zeros
/// stripped, scientific notation outside the `[1e-4, 10^sig)` magnitude
/// window, two-digit signed exponents. CSV cells use `%.12g`.
pub fn format_g(x: f64, sig: usize) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".to_string()
        } else {
            "0".to_string()
        };
    }
    let sig = sig.max(1);
    // Rust's `{:e}` renders d.ddd…e<exp>; the exponent after rounding picks
    // the %g branch.
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp_str) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp_str.parse().expect("integer exponent");
    if exp >= sig as i32 || exp < -4 {
        let mantissa = strip_trailing_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        strip_trailing_zeros(&format!("{x:.decimals$}"))
    }
}

fn strip_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

/// A CSV cell from a float, `%.12g`.
pub fn csv_f64(x: f64) -> String {
    format_g(x, 12)
}

/// Record of one emitted file.
#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Accumulates emitted files and writes the manifest last.
pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents)?;
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.write(name, &body)
    }

    /// Writes `manifest.json` listing every emitted file with content hashes.
    pub fn finish(
        mut self,
        command: &str,
        config_path: &Path,
        config_bytes: &[u8],
        overrides: &[String],
        flags: &[String],
        wall_time_secs: f64,
    ) -> io::Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema_version: u32,
            command: &'a str,
            package_version: &'a str,
            config_path: String,
            config_sha256: String,
            overrides: &'a [String],
            exit_flags: &'a [String],
            wall_time_secs: f64,
            outputs: &'a [OutputRecord],
        }
        let manifest = Manifest {
            schema_version: 1,
            command,
            package_version: env!("CARGO_PKG_VERSION"),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            overrides,
            exit_flags: flags,
            wall_time_secs,
            outputs: &self.outputs,
        };
        let mut body = serde_json::to_vec_pretty(&manifest)?;
        body.push(b'\n');
        fs::write(self.root.join("manifest.json"), body)?;
        self.outputs.clear();
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_g_matches_c_conventions() {
        assert_eq!(format_g(0.1, 12), "0.1");
        assert_eq!(format_g(1e-5, 12), "1e-05");
        assert_eq!(format_g(-1e-5, 12), "-1e-05");
        assert_eq!(format_g(100.0, 12), "100");
        assert_eq!(format_g(2.5, 12), "2.5");
        assert_eq!(format_g(1e100, 12), "1e+100");
        assert_eq!(format_g(0.0, 12), "0");
        assert_eq!(format_g(1234567890123456.0, 12), "1.23456789012e+15");
        assert_eq!(format_g(123456.789, 3), "1.23e+05");
        assert_eq!(format_g(0.000123456, 4), "0.0001235");
        // Rounding can promote into the next decade.
        assert_eq!(format_g(9.999999, 3), "10");
    }
}
