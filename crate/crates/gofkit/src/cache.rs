//! Spectrum cache files.
//!
//! A cache is UTF-8 text. The first line is the version stamp `GOFKIT-SPEC v1`;
//! the rest is one record:
//!
//! ```text
//! kind nystrom            # nystrom | cosine | zonal | tensor
//! kernel centered(gaussian:bw=0.3)
//! null uniform-cube:d=1
//! K 20
//! nodes 256
//! decay 1.7e0
//! degenerate true
//! tail none               # or: tail <scale> <exponent>
//! array eigenvalues 20
//! 1.01e-1 2.53e-2 ...
//! array weights 256
//! ...
//! end
//! ```
//!
//! Arrays are a header `array <name> <length>` followed by that many
//! whitespace-separated values. Reals are written in shortest round-trip
//! scientific notation, so loading a saved basis reproduces every array bit
//! for bit. Nyström records carry `weights`, `points` (row-major node
//! coordinates), `extension` (eigenvalues used by the off-node formula) and
//! `values` (eigenfunctions at the nodes, row-major nodes × rank). Zonal records
//! carry `dim` and `degrees`; tensor records carry `dim`, `codes` and a nested
//! `factor` record terminated by its own `end`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gofkit_core::dists::NullModel;
use gofkit_core::quadrature::Quadrature;
use gofkit_core::rng::label_hash;
use gofkit_core::spectrum::{PowerTail, SpectralBasis};

use crate::resolve::{kernel_from_id, SpectrumRequest};
use crate::{Error, Result};

pub const VERSION: &str = "GOFKIT-SPEC v1";

const PER_LINE: usize = 4;

fn real(x: f64) -> String {
    format!("{x:e}")
}

fn push_array<T: std::fmt::Display>(out: &mut String, name: &str, values: &[T]) {
    let _ = writeln!(out, "array {name} {}", values.len());
    for chunk in values.chunks(PER_LINE) {
        let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn push_reals(out: &mut String, name: &str, values: &[f64]) {
    let text: Vec<String> = values.iter().map(|v| real(*v)).collect();
    push_array(out, name, &text);
}

fn write_record(out: &mut String, basis: &SpectralBasis) -> Result<()> {
    let kind = if basis.nystrom_parts().is_some() {
        "nystrom"
    } else if basis.zonal_parts().is_some() {
        "zonal"
    } else if basis.tensor_parts().is_some() {
        "tensor"
    } else if basis.kernel_id() == "cosine" && basis.null() == &NullModel::UniformCube(1) {
        "cosine"
    } else {
        return Err(Error::invalid(
            "spectrum",
            "bases built from arbitrary feature closures cannot be cached",
        ));
    };
    let _ = writeln!(out, "kind {kind}");
    let _ = writeln!(out, "kernel {}", basis.kernel_id());
    let _ = writeln!(out, "null {}", basis.null().id());
    let _ = writeln!(out, "K {}", basis.len());
    let nodes = basis.nystrom_parts().map_or(0, |p| p.quadrature.len());
    let _ = writeln!(out, "nodes {nodes}");
    let _ = writeln!(out, "decay {}", real(basis.decay_exponent()));
    let _ = writeln!(out, "degenerate {}", basis.is_degenerate());
    match basis.tail() {
        Some(t) => {
            let _ = writeln!(out, "tail {} {}", real(t.scale), real(t.exponent));
        }
        None => out.push_str("tail none\n"),
    }
    push_reals(out, "eigenvalues", basis.eigenvalues());
    if let Some(p) = basis.nystrom_parts() {
        push_reals(out, "weights", p.quadrature.weights());
        push_reals(out, "points", p.quadrature.nodes());
        push_reals(out, "extension", p.extension_eigenvalues);
        push_reals(out, "values", p.values);
    } else if let Some(z) = basis.zonal_parts() {
        let _ = writeln!(out, "dim {}", z.dim);
        push_array(out, "degrees", z.degrees);
    } else if let Some(t) = basis.tensor_parts() {
        let _ = writeln!(out, "dim {}", t.dim);
        push_array(out, "codes", &t.codes[..basis.len() * t.dim]);
        out.push_str("factor\n");
        write_record(out, t.factor)?;
    }
    out.push_str("end\n");
    Ok(())
}

/// Serializes a basis to the cache text format.
pub fn to_text(basis: &SpectralBasis) -> Result<String> {
    let mut out = format!("{VERSION}\n");
    write_record(&mut out, basis)?;
    Ok(out)
}

pub fn save(basis: &SpectralBasis, path: &Path) -> Result<()> {
    let text = to_text(basis)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write then rename so concurrent readers never see a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SpectralBasis> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        let line = self.lines.get(self.pos).map_or(self.lines.last().map_or(0, |l| l.0), |l| l.0);
        Error::format(self.path, line, reason)
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self.lines.get(self.pos).map(|l| l.1).ok_or_else(|| self.fail("unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ if line == key => Ok(""),
            _ => {
                self.pos -= 1;
                Err(self.fail(format!("expected `{key}`")))
            }
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| {
            self.pos -= 1;
            self.fail(format!("bad value for `{key}`"))
        })
    }

    fn array<T: std::str::FromStr>(&mut self, name: &str) -> Result<Vec<T>> {
        let head = self.field("array")?;
        let (found, len) = head.split_once(' ').ok_or_else(|| self.fail("bad array header"))?;
        if found != name {
            self.pos -= 1;
            return Err(self.fail(format!("expected array `{name}`, found `{found}`")));
        }
        let len: usize = len.trim().parse().map_err(|_| self.fail("bad array length"))?;
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let line = self.next_line()?;
            for tok in line.split_whitespace() {
                let v = tok.parse().map_err(|_| {
                    self.pos -= 1;
                    self.fail(format!("bad number `{tok}` in `{name}`"))
                })?;
                out.push(v);
            }
        }
        if out.len() != len {
            self.pos -= 1;
            return Err(self.fail(format!("array `{name}` has more than {len} entries")));
        }
        Ok(out)
    }

    fn record(&mut self) -> Result<SpectralBasis> {
        let kind = self.field("kind")?;
        let kernel = self.field("kernel")?.to_string();
        let null_id = self.field("null")?.to_string();
        let null = NullModel::parse(&null_id)?;
        let k: usize = self.parsed("K")?;
        let nodes: usize = self.parsed("nodes")?;
        let decay: f64 = self.parsed("decay")?;
        let degenerate: bool = self.parsed("degenerate")?;
        let tail = match self.field("tail")? {
            "none" => None,
            v => {
                let parts: Vec<f64> = v.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                if parts.len() != 2 {
                    self.pos -= 1;
                    return Err(self.fail("tail needs `none` or two numbers"));
                }
                Some(PowerTail {
                    scale: parts[0],
                    exponent: parts[1],
                })
            }
        };
        let eigenvalues: Vec<f64> = self.array("eigenvalues")?;
        if eigenvalues.len() != k {
            return Err(self.fail(format!("K is {k} but {} eigenvalues are stored", eigenvalues.len())));
        }
        let basis = match kind {
            "cosine" => {
                let b = SpectralBasis::cosine_reference(k)?;
                if b.eigenvalues() != eigenvalues.as_slice() {
                    return Err(self.fail("stored eigenvalues differ from the cosine reference"));
                }
                b
            }
            "nystrom" => {
                let weights = self.array("weights")?;
                let points = self.array("points")?;
                let extension = self.array("extension")?;
                let values = self.array("values")?;
                if weights.len() != nodes {
                    return Err(self.fail(format!("nodes is {nodes} but {} weights are stored", weights.len())));
                }
                let quad = Quadrature::new(null.clone(), points, weights)?;
                let kernel_fn = kernel_from_id(&kernel, &quad)?;
                if kernel_fn.id() != kernel {
                    return Err(self.fail(format!("kernel id `{kernel}` does not round-trip")));
                }
                SpectralBasis::from_nystrom_parts(kernel_fn, quad, extension, values, eigenvalues, decay, degenerate)?
            }
            "zonal" => {
                let dim: usize = self.parsed("dim")?;
                let degrees = self.array("degrees")?;
                SpectralBasis::from_zonal_parts(dim, degrees, eigenvalues, kernel.clone(), Some(decay))?
            }
            "tensor" => {
                let dim: usize = self.parsed("dim")?;
                let codes = self.array("codes")?;
                self.field("factor")?;
                let factor = self.record()?;
                SpectralBasis::from_tensor_parts(factor, dim, codes, eigenvalues, kernel.clone(), null.clone(), decay)?
            }
            other => return Err(self.fail(format!("unknown record kind `{other}`"))),
        };
        self.field("end")?;
        if basis.is_degenerate() != degenerate || basis.kernel_id() != kernel || basis.null() != &null {
            return Err(self.fail("stored metadata disagrees with the rebuilt basis"));
        }
        Ok(basis.with_decay_exponent(decay).with_tail(tail))
    }
}

/// Parses the cache text format; `path` is used in diagnostics only.
pub fn from_text(text: &str, path: &Path) -> Result<SpectralBasis> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let first = lines.first().map(|l| l.1).unwrap_or("");
    if first != VERSION {
        if first.starts_with("GOFKIT-SPEC") {
            return Err(Error::CacheVersion {
                path: path.to_path_buf(),
                found: first.to_string(),
                expected: VERSION,
            });
        }
        return Err(Error::format(path, 1, format!("missing `{VERSION}` header")));
    }
    let mut reader = Reader { lines, pos: 1, path };
    let basis = reader.record()?;
    if reader.pos != reader.lines.len() {
        return Err(reader.fail("trailing content after the record"));
    }
    Ok(basis)
}

/// Content-addressed store of decompositions.
#[derive(Debug, Clone)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SpectrumCache { dir: dir.into() }
    }

    /// `$GOFKIT_CACHE`, or `.gofkit-cache` in the working directory.
    pub fn default_location() -> Self {
        SpectrumCache::new(std::env::var_os("GOFKIT_CACHE").map_or_else(|| PathBuf::from(".gofkit-cache"), PathBuf::from))
    }

    pub fn path_for(&self, request: &SpectrumRequest) -> Result<PathBuf> {
        let key = request.cache_key()?;
        Ok(self.dir.join(format!("{:016x}.spec", label_hash(&key))))
    }

    /// Loads the cached basis for `request`, building and storing it on a miss.
    /// `refresh` forces a rebuild. Returns the basis and whether it came from disk.
    pub fn get_or_build(&self, request: &SpectrumRequest, refresh: bool) -> Result<(SpectralBasis, bool)> {
        let path = self.path_for(request)?;
        if !refresh && path.exists() {
            return Ok((load(&path)?, true));
        }
        let basis = request.build()?;
        save(&basis, &path)?;
        Ok((basis, false))
    }
}
