//! Line-oriented text documents: instances, truths and reports.
//!
//! Every document starts with `phaseret <type> 1`, continues with
//! `key value...` header lines and ends with `[section]` blocks of
//! whitespace-separated rows. `#` starts a comment. Reals are written with
//! 17 significant digits, which round-trips every `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use phaseret_core::engine2d::Index2;
use phaseret_core::oracle::{GeneratorKind, GeneratorMetadata};
use phaseret_core::{
    CenteredSpectrum, Complex64, Grid, ProblemInstance1D, ProblemInstance2D, Spectrum2D, Support,
};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A parsed document, before interpretation.
#[derive(Debug, Default)]
pub struct Document {
    pub doctype: String,
    header: Vec<(usize, String, Vec<String>)>,
    sections: BTreeMap<String, Vec<(usize, Vec<String>)>>,
    source: String,
}

impl Document {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut doc = Document {
            source: source.to_string(),
            ..Document::default()
        };
        let mut current: Option<String> = None;
        let mut seen_magic = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if !seen_magic {
                if words.len() != 3 || words[0] != "phaseret" {
                    return Err(doc.error(line_no, "expected 'phaseret <type> <version>'"));
                }
                if words[2] != FORMAT_VERSION.to_string() {
                    return Err(doc.error(line_no, &format!("unsupported version {}", words[2])));
                }
                doc.doctype = words[1].clone();
                seen_magic = true;
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if doc.sections.contains_key(&name) {
                    return Err(doc.error(line_no, &format!("duplicate section [{name}]")));
                }
                doc.sections.insert(name.clone(), Vec::new());
                current = Some(name);
                continue;
            }
            match &current {
                Some(name) => doc.sections.get_mut(name).unwrap().push((line_no, words)),
                None => {
                    let mut words = words.into_iter();
                    let key = words.next().unwrap();
                    doc.header.push((line_no, key, words.collect()));
                }
            }
        }
        if !seen_magic {
            return Err(doc.error(0, "empty document"));
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn error(&self, line: usize, message: &str) -> CliError {
        CliError::Format {
            source_name: self.source.clone(),
            line,
            message: message.to_string(),
        }
    }

    pub fn expect_type(&self, doctype: &str) -> Result<(), CliError> {
        if self.doctype == doctype {
            Ok(())
        } else {
            Err(self.error(
                1,
                &format!("expected a {doctype} document, found {}", self.doctype),
            ))
        }
    }

    fn entry(&self, key: &str) -> Option<&(usize, String, Vec<String>)> {
        self.header.iter().find(|(_, k, _)| k == key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    /// Values of header line `key`; exactly `count` of them.
    pub fn values(&self, key: &str, count: usize) -> Result<(usize, &[String]), CliError> {
        let (line, _, values) = self
            .entry(key)
            .ok_or_else(|| self.error(0, &format!("missing header line '{key}'")))?;
        if values.len() != count {
            return Err(self.error(*line, &format!("'{key}' takes {count} values")));
        }
        Ok((*line, values))
    }

    pub fn number<T: std::str::FromStr>(&self, line: usize, word: &str) -> Result<T, CliError> {
        word.parse()
            .map_err(|_| self.error(line, &format!("cannot parse '{word}'")))
    }

    pub fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let (line, values) = self.values(key, 1)?;
        self.number(line, &values[0])
    }

    /// Key/value pairs of a header line such as `search verified expanded 3`,
    /// after its leading positional word.
    pub fn pairs(&self, key: &str) -> Result<(usize, &str, BTreeMap<&str, &str>), CliError> {
        let (line, _, values) = self
            .entry(key)
            .ok_or_else(|| self.error(0, &format!("missing header line '{key}'")))?;
        if values.is_empty() || values.len() % 2 == 0 {
            return Err(self.error(*line, &format!("malformed '{key}' line")));
        }
        let map = values[1..]
            .chunks(2)
            .map(|kv| (kv[0].as_str(), kv[1].as_str()))
            .collect();
        Ok((*line, values[0].as_str(), map))
    }

    /// Rows of `[name]`, each with `width` numeric columns.
    pub fn rows(&self, name: &str, width: usize) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
        let Some(rows) = self.sections.get(name) else {
            return Err(self.error(0, &format!("missing section [{name}]")));
        };
        rows.iter()
            .map(|(line, words)| {
                if words.len() != width {
                    return Err(self.error(*line, &format!("[{name}] rows have {width} columns")));
                }
                let values = words
                    .iter()
                    .map(|w| self.number::<f64>(*line, w))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((*line, values))
            })
            .collect()
    }

    pub fn raw_rows(&self, name: &str) -> Option<&[(usize, Vec<String>)]> {
        self.sections.get(name).map(Vec::as_slice)
    }
}

fn integer(doc: &Document, line: usize, x: f64) -> Result<i64, CliError> {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        Ok(x as i64)
    } else {
        Err(doc.error(line, &format!("expected an integer index, got {x}")))
    }
}

/// Values of a section keyed by consecutive integer indices `lo..=hi`.
fn indexed(doc: &Document, name: &str, lo: i64, hi: i64) -> Result<Vec<Vec<f64>>, CliError> {
    let Some(rows) = doc.raw_rows(name) else {
        return Err(doc.error(0, &format!("missing section [{name}]")));
    };
    let width = rows.first().map_or(2, |(_, w)| w.len());
    let rows = doc.rows(name, width)?;
    let expected = (hi - lo + 1).max(0) as usize;
    if rows.len() != expected {
        return Err(doc.error(
            0,
            &format!("[{name}] needs {expected} rows, found {}", rows.len()),
        ));
    }
    rows.into_iter()
        .zip(lo..=hi)
        .map(|((line, values), want)| {
            if integer(doc, line, values[0])? != want {
                return Err(doc.error(line, &format!("expected index {want}")));
            }
            Ok(values[1..].to_vec())
        })
        .collect()
}

/// Values of a section keyed by index pairs over `[-n, n]^2`, row-major.
fn indexed_2d(doc: &Document, name: &str, n: i64, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = doc.rows(name, width + 2)?;
    let side = (2 * n + 1) as usize;
    if rows.len() != side * side {
        return Err(doc.error(
            0,
            &format!("[{name}] needs {} rows, found {}", side * side, rows.len()),
        ));
    }
    let mut out = Vec::with_capacity(rows.len());
    let indices = (-n..=n).flat_map(|u| (-n..=n).map(move |v| (u, v)));
    for ((line, values), want) in rows.into_iter().zip(indices) {
        let got = (
            integer(doc, line, values[0])?,
            integer(doc, line, values[1])?,
        );
        if got != want {
            return Err(doc.error(line, &format!("expected index {} {}", want.0, want.1)));
        }
        out.push(values[2..].to_vec());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OneD,
    TwoD,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::OneD => "1d",
            Mode::TwoD => "2d",
        }
    }

    fn read(doc: &Document) -> Result<Self, CliError> {
        let (line, values) = doc.values("mode", 1)?;
        match values[0].as_str() {
            "1d" => Ok(Mode::OneD),
            "2d" => Ok(Mode::TwoD),
            other => Err(doc.error(line, &format!("unknown mode '{other}'"))),
        }
    }
}

/// Measured data plus the solve hints carried with it.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    OneD {
        support: Support,
        field: Vec<f64>,
        moduli: Vec<f64>,
        priors: Vec<(i64, f64)>,
    },
    TwoD {
        order: usize,
        /// Row-major over `k1, k2` in grid order.
        field: Vec<f64>,
        moduli: Vec<f64>,
        priors: Vec<(Index2, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub grid: Grid,
    pub measurement: Measurement,
    /// Phase of the gauge anchor, in radians.
    pub gauge: f64,
    pub generator: Option<GeneratorMetadata>,
}

impl InstanceFile {
    pub fn from_1d(inst: &ProblemInstance1D, generator: Option<GeneratorMetadata>) -> Self {
        Self {
            grid: inst.grid(),
            measurement: Measurement::OneD {
                support: inst.support(),
                field: inst.field_magnitude().to_vec(),
                moduli: inst.coeff_magnitudes().to_vec(),
                priors: inst.priors().iter().map(|(l, p)| (*l, p.arg())).collect(),
            },
            gauge: inst.gauge_phase().arg(),
            generator,
        }
    }

    pub fn from_2d(inst: &ProblemInstance2D, generator: Option<GeneratorMetadata>) -> Self {
        Self {
            grid: inst.grid(),
            measurement: Measurement::TwoD {
                order: inst.order(),
                field: inst.field_magnitude().to_vec(),
                moduli: inst.coeff_magnitudes().to_vec(),
                priors: inst.priors().iter().map(|(l, p)| (*l, p.arg())).collect(),
            },
            gauge: inst.gauge_phase().arg(),
            generator,
        }
    }

    pub fn mode(&self) -> Mode {
        match self.measurement {
            Measurement::OneD { .. } => Mode::OneD,
            Measurement::TwoD { .. } => Mode::TwoD,
        }
    }

    pub fn instance_1d(&self) -> Result<ProblemInstance1D, CliError> {
        let Measurement::OneD {
            support,
            field,
            moduli,
            priors,
        } = &self.measurement
        else {
            return Err(CliError::Usage("instance is not 1d".into()));
        };
        let mut inst = ProblemInstance1D::new(self.grid, field.clone(), *support, moduli.clone())?
            .with_gauge(self.gauge);
        for &(l, phase) in priors {
            inst = inst.with_prior(l, phase);
        }
        Ok(inst)
    }

    pub fn instance_2d(&self) -> Result<ProblemInstance2D, CliError> {
        let Measurement::TwoD {
            order,
            field,
            moduli,
            priors,
        } = &self.measurement
        else {
            return Err(CliError::Usage("instance is not 2d".into()));
        };
        let mut inst = ProblemInstance2D::new(self.grid, *order, field.clone(), moduli.clone())?
            .with_gauge(self.gauge);
        for &(idx, phase) in priors {
            inst = inst.with_prior(idx, phase);
        }
        Ok(inst)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("phaseret instance {FORMAT_VERSION}\n");
        let _ = writeln!(out, "mode {}", self.mode().name());
        let _ = writeln!(out, "grid {}", self.grid.len());
        match &self.measurement {
            Measurement::OneD { support, .. } => {
                let _ = writeln!(out, "support {} {}", support.s0, support.s1);
            }
            Measurement::TwoD { order, .. } => {
                let _ = writeln!(out, "order {order}");
            }
        }
        let _ = writeln!(out, "gauge {}", real(self.gauge));
        if let Some(g) = &self.generator {
            let _ = writeln!(
                out,
                "generator {} seed {} noise {} sinc {}",
                g.kind.name(),
                g.seed,
                real(g.noise),
                g.sinc
            );
            if let Some((t0, dt)) = g.axis {
                let _ = writeln!(out, "axis {} {}", real(t0), real(dt));
            }
        }
        match &self.measurement {
            Measurement::OneD {
                support,
                field,
                moduli,
                priors,
            } => {
                out.push_str("[field_magnitude]\n");
                for (k, f) in self.grid.indices().zip(field) {
                    let _ = writeln!(out, "{k} {}", real(*f));
                }
                out.push_str("[coeff_moduli]\n");
                for (l, m) in support.indices().zip(moduli) {
                    let _ = writeln!(out, "{l} {}", real(*m));
                }
                out.push_str("[priors]\n");
                for (l, p) in priors {
                    let _ = writeln!(out, "{l} {}", real(*p));
                }
            }
            Measurement::TwoD {
                order,
                field,
                moduli,
                priors,
            } => {
                out.push_str("[field_magnitude]\n");
                let ks: Vec<i64> = self.grid.indices().collect();
                let cells = ks.iter().flat_map(|&a| ks.iter().map(move |&b| (a, b)));
                for ((k1, k2), f) in cells.zip(field) {
                    let _ = writeln!(out, "{k1} {k2} {}", real(*f));
                }
                out.push_str("[coeff_moduli]\n");
                let n = *order as i64;
                let cells = (-n..=n).flat_map(|u| (-n..=n).map(move |v| (u, v)));
                for ((u, v), m) in cells.zip(moduli) {
                    let _ = writeln!(out, "{u} {v} {}", real(*m));
                }
                out.push_str("[priors]\n");
                for ((u, v), p) in priors {
                    let _ = writeln!(out, "{u} {v} {}", real(*p));
                }
            }
        }
        out
    }

    pub fn from_document(doc: &Document) -> Result<Self, CliError> {
        doc.expect_type("instance")?;
        let mode = Mode::read(doc)?;
        let grid = Grid::new(doc.scalar("grid")?)?;
        let gauge = if doc.has("gauge") {
            doc.scalar("gauge")?
        } else {
            0.0
        };
        let generator = if doc.has("generator") {
            let (line, kind, map) = doc.pairs("generator")?;
            let get = |k: &str| {
                map.get(k)
                    .copied()
                    .ok_or_else(|| doc.error(line, &format!("generator line lacks '{k}'")))
            };
            let axis = if doc.has("axis") {
                let (line, v) = doc.values("axis", 2)?;
                Some((doc.number(line, &v[0])?, doc.number(line, &v[1])?))
            } else {
                None
            };
            Some(GeneratorMetadata {
                kind: kind
                    .parse::<GeneratorKind>()
                    .map_err(|e| doc.error(line, &e))?,
                seed: doc.number(line, get("seed")?)?,
                noise: doc.number(line, get("noise")?)?,
                sinc: get("sinc")?.to_string(),
                axis,
            })
        } else {
            None
        };
        let measurement = match mode {
            Mode::OneD => {
                let (line, v) = doc.values("support", 2)?;
                let support = Support::new(doc.number(line, &v[0])?, doc.number(line, &v[1])?);
                if support.s1 < support.s0 {
                    return Err(doc.error(line, "support is empty"));
                }
                let field = indexed(doc, "field_magnitude", grid.lo(), grid.hi())?
                    .into_iter()
                    .map(|v| single(doc, v))
                    .collect::<Result<_, _>>()?;
                let moduli = indexed(doc, "coeff_moduli", support.s0, support.s1)?
                    .into_iter()
                    .map(|v| single(doc, v))
                    .collect::<Result<_, _>>()?;
                let priors = match doc.raw_rows("priors") {
                    None => Vec::new(),
                    Some(_) => doc
                        .rows("priors", 2)?
                        .into_iter()
                        .map(|(line, v)| Ok((integer(doc, line, v[0])?, v[1])))
                        .collect::<Result<_, CliError>>()?,
                };
                Measurement::OneD {
                    support,
                    field,
                    moduli,
                    priors,
                }
            }
            Mode::TwoD => {
                let order: usize = doc.scalar("order")?;
                let field = doc
                    .rows("field_magnitude", 3)?
                    .into_iter()
                    .map(|(_, v)| v[2])
                    .collect::<Vec<_>>();
                if field.len() != grid.len() * grid.len() {
                    return Err(doc.error(0, "[field_magnitude] must cover the whole grid"));
                }
                let moduli = indexed_2d(doc, "coeff_moduli", order as i64, 1)?
                    .into_iter()
                    .map(|v| v[0])
                    .collect();
                let priors = match doc.raw_rows("priors") {
                    None => Vec::new(),
                    Some(_) => doc
                        .rows("priors", 3)?
                        .into_iter()
                        .map(|(line, v)| {
                            Ok(((integer(doc, line, v[0])?, integer(doc, line, v[1])?), v[2]))
                        })
                        .collect::<Result<_, CliError>>()?,
                };
                Measurement::TwoD {
                    order,
                    field,
                    moduli,
                    priors,
                }
            }
        };
        Ok(Self {
            grid,
            measurement,
            gauge,
            generator,
        })
    }
}

fn single(doc: &Document, v: Vec<f64>) -> Result<f64, CliError> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(doc.error(0, "expected one value per index")),
    }
}

/// Coefficients of a known or recovered spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    OneD(CenteredSpectrum),
    TwoD { grid: Grid, spectrum: Spectrum2D },
}

impl Coefficients {
    pub fn header(&self) -> String {
        match self {
            Coefficients::OneD(s) => format!(
                "mode 1d\ngrid {}\nsupport {} {}\n",
                s.grid().len(),
                s.support().s0,
                s.support().s1
            ),
            Coefficients::TwoD { grid, spectrum } => {
                format!("mode 2d\ngrid {}\norder {}\n", grid.len(), spectrum.order())
            }
        }
    }

    pub fn section(&self) -> String {
        let mut out = String::from("[coefficients]\n");
        match self {
            Coefficients::OneD(s) => {
                for (l, a) in s.support().indices().zip(s.support_values()) {
                    let _ = writeln!(out, "{l} {} {}", real(a.re), real(a.im));
                }
            }
            Coefficients::TwoD { spectrum, .. } => {
                for (slot, a) in spectrum.values().iter().enumerate() {
                    let (u, v) = spectrum.index_of(slot);
                    let _ = writeln!(out, "{u} {v} {} {}", real(a.re), real(a.im));
                }
            }
        }
        out
    }

    /// Truth document.
    pub fn to_text(&self) -> String {
        format!(
            "phaseret truth {FORMAT_VERSION}\n{}{}",
            self.header(),
            self.section()
        )
    }

    /// Reads `[coefficients]` from a truth or report document.
    pub fn from_document(doc: &Document) -> Result<Self, CliError> {
        if doc.doctype != "truth" && doc.doctype != "report" {
            return Err(doc.error(
                1,
                &format!("expected a truth or report document, found {}", doc.doctype),
            ));
        }
        let grid = Grid::new(doc.scalar("grid")?)?;
        let complex = |v: Vec<f64>| Complex64::new(v[0], v[1]);
        match Mode::read(doc)? {
            Mode::OneD => {
                let (line, v) = doc.values("support", 2)?;
                let support = Support::new(doc.number(line, &v[0])?, doc.number(line, &v[1])?);
                let values: Vec<Complex64> = indexed(doc, "coefficients", support.s0, support.s1)?
                    .into_iter()
                    .map(complex)
                    .collect();
                if values.is_empty() {
                    return Err(doc.error(line, "support is empty"));
                }
                Ok(Coefficients::OneD(CenteredSpectrum::from_support(
                    grid, support, &values,
                )?))
            }
            Mode::TwoD => {
                let order: usize = doc.scalar("order")?;
                let values = indexed_2d(doc, "coefficients", order as i64, 2)?
                    .into_iter()
                    .map(complex)
                    .collect();
                Ok(Coefficients::TwoD {
                    grid,
                    spectrum: Spectrum2D::new(order, values)?,
                })
            }
        }
    }
}

/// Reads standalone prior hints, one `<index...> <phase>` row each, with
/// `dims` index columns.
pub fn read_priors(path: &Path, dims: usize) -> Result<Vec<(Vec<i64>, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || CliError::Format {
            source_name: path.display().to_string(),
            line: n + 1,
            message: format!("expected {dims} index column(s) and a phase"),
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() != dims + 1 {
            return Err(bad());
        }
        let index = words[..dims]
            .iter()
            .map(|w| w.parse().map_err(|_| bad()))
            .collect::<Result<Vec<i64>, _>>()?;
        out.push((index, words[dims].parse().map_err(|_| bad())?));
    }
    Ok(out)
}
