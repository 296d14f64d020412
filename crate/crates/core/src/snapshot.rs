//! Plain-text state snapshots.
//!
//! A snapshot is a `key=value` header followed by `[block]` sections of
//! comma-separated numbers, one matrix row (or one vector entry) per line.
//! Floats are written in shortest round-trip form, so loading a snapshot
//! reproduces the state bit for bit.
//!
//! ```text
//! # kafgp state v1
//! model=gp
//! lengthscale=1
//! ...
//! [dict]
//! 0.5,1.25
//! [mu]
//! 0.9090909090909091
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{KafError, Result};
use crate::kernel::{Dictionary, KernelSpec};
use crate::klms::{KlmsState, KlmsVariant, StepSize};
use crate::online_gp::GpState;

const MAGIC: &str = "# kafgp state v1";

#[derive(Debug, Clone)]
pub enum Snapshot {
    Gp(GpState),
    Klms(KlmsState),
}

fn opt_to_string<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn write_spec(out: &mut String, spec: &KernelSpec) {
    let _ = writeln!(out, "family={}", spec.family.name());
    let _ = writeln!(out, "lengthscale={}", spec.lengthscale);
    let _ = writeln!(out, "signal_variance={}", spec.signal_variance);
    let _ = writeln!(out, "noise_variance={}", spec.noise_variance);
    let _ = writeln!(out, "jitter={}", spec.jitter);
}

fn write_dict(out: &mut String, dict: &Dictionary) {
    let _ = writeln!(out, "dim={}", opt_to_string(dict.dim()));
    let _ = writeln!(out, "next_id={}", dict.next_id());
    out.push_str("[ids]\n");
    for id in dict.ids() {
        let _ = writeln!(out, "{id}");
    }
    out.push_str("[dict]\n");
    for p in dict.points() {
        write_row(out, p.iter().copied());
    }
}

fn write_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

fn write_vector(out: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(out, "[{name}]");
    for x in v {
        let _ = writeln!(out, "{x}");
    }
}

fn write_matrix(out: &mut String, name: &str, m: DMatrixView<'_, f64>) {
    let _ = writeln!(out, "[{name}]");
    for i in 0..m.nrows() {
        write_row(out, m.row(i).iter().copied());
    }
}

pub fn gp_to_string(state: &GpState) -> String {
    let mut out = format!("{MAGIC}\nmodel=gp\n");
    write_spec(&mut out, state.spec());
    let _ = writeln!(out, "budget={}", opt_to_string(state.budget()));
    let _ = writeln!(out, "admission_threshold={}", state.admission_threshold());
    write_dict(&mut out, state.dict());
    write_vector(&mut out, "targets", state.targets());
    write_vector(&mut out, "mu", state.mu().as_slice());
    write_matrix(&mut out, "sigma", state.sigma());
    write_matrix(&mut out, "q_inv", state.q_inv());
    out
}

fn step_to_string(s: StepSize) -> String {
    match s {
        StepSize::Fixed(eta) => eta.to_string(),
        StepSize::NoiseMatched => "matched".to_string(),
    }
}

pub fn klms_to_string(state: &KlmsState) -> String {
    let mut out = format!("{MAGIC}\nmodel=klms\n");
    write_spec(&mut out, state.spec());
    out.push_str(&format!("variant={}\n", state.variant().kind()));
    match *state.variant() {
        KlmsVariant::TypeI { eta } => {
            let _ = writeln!(out, "eta={}", step_to_string(eta));
        }
        KlmsVariant::Qklms { eta, quant_radius } => {
            let _ = writeln!(out, "eta={}", step_to_string(eta));
            let _ = writeln!(out, "quant_radius={quant_radius}");
        }
        KlmsVariant::Knlms { eta, eps_reg, coherence_mu0 } => {
            let _ = writeln!(out, "eta={eta}");
            let _ = writeln!(out, "eps_reg={eps_reg}");
            let _ = writeln!(out, "coherence_mu0={coherence_mu0}");
        }
        KlmsVariant::Beta { beta, coherence_mu0 } => {
            let _ = writeln!(out, "beta={beta}");
            let _ = writeln!(out, "coherence_mu0={}", opt_to_string(coherence_mu0));
        }
    }
    write_dict(&mut out, state.dict());
    write_vector(&mut out, "alpha", state.alpha());
    out
}

struct Parsed {
    header: BTreeMap<String, String>,
    blocks: BTreeMap<String, Vec<Vec<f64>>>,
}

fn parse_error(line: usize, message: impl Into<String>) -> KafError {
    KafError::Parse { row: line, message: message.into() }
}

fn parse_sections(text: &str) -> Result<Parsed> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(parse_error(1, "missing snapshot header")),
    }
    let mut header = BTreeMap::new();
    let mut blocks: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            blocks.insert(name.to_string(), Vec::new());
            current = Some(name.to_string());
            continue;
        }
        match &current {
            None => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| parse_error(i + 1, format!("expected key=value, got `{line}`")))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            Some(block) => {
                let row = line
                    .split(',')
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| parse_error(i + 1, format!("bad number in [{block}]: {e}")))?;
                blocks.get_mut(block).expect("block exists").push(row);
            }
        }
    }
    Ok(Parsed { header, blocks })
}

impl Parsed {
    fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| KafError::arg(format!("snapshot is missing `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| KafError::arg(format!("snapshot field `{key}` has bad value `{v}`")))
    }

    fn opt_num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.get(key)? == "none" {
            Ok(None)
        } else {
            self.num(key).map(Some)
        }
    }

    fn block(&self, name: &str) -> Result<&[Vec<f64>]> {
        self.blocks
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| KafError::arg(format!("snapshot is missing block [{name}]")))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        self.block(name)?
            .iter()
            .map(|r| match r.as_slice() {
                [v] => Ok(*v),
                _ => Err(KafError::arg(format!("[{name}] rows must hold one value"))),
            })
            .collect()
    }

    fn matrix(&self, name: &str, n: usize) -> Result<DMatrix<f64>> {
        let rows = self.block(name)?;
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(KafError::arg(format!("[{name}] must be {n}x{n}")));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    fn spec(&self) -> Result<KernelSpec> {
        let spec = KernelSpec {
            family: self.get("family")?.parse()?,
            lengthscale: self.num("lengthscale")?,
            signal_variance: self.num("signal_variance")?,
            noise_variance: self.num("noise_variance")?,
            jitter: self.num("jitter")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn dict(&self) -> Result<Dictionary> {
        let ids = self
            .vector("ids")?
            .into_iter()
            .map(|v| v as u64)
            .collect();
        Dictionary::from_parts(
            self.opt_num("dim")?,
            self.block("dict")?.to_vec(),
            ids,
            self.num("next_id")?,
        )
    }

    fn step(&self) -> Result<StepSize> {
        match self.get("eta")? {
            "matched" => Ok(StepSize::NoiseMatched),
            _ => Ok(StepSize::Fixed(self.num("eta")?)),
        }
    }
}

impl Snapshot {
    pub fn parse(text: &str) -> Result<Snapshot> {
        let p = parse_sections(text)?;
        let spec = p.spec()?;
        let dict = p.dict()?;
        match p.get("model")? {
            "gp" => {
                let n = dict.len();
                let state = GpState::restore(
                    spec,
                    p.opt_num("budget")?,
                    p.num("admission_threshold")?,
                    dict,
                    p.vector("targets")?,
                    DVector::from_vec(p.vector("mu")?),
                    p.matrix("sigma", n)?,
                    p.matrix("q_inv", n)?,
                )?;
                Ok(Snapshot::Gp(state))
            }
            "klms" => {
                let variant = match p.get("variant")? {
                    "klms" => KlmsVariant::TypeI { eta: p.step()? },
                    "qklms" => KlmsVariant::Qklms {
                        eta: p.step()?,
                        quant_radius: p.num("quant_radius")?,
                    },
                    "knlms" => KlmsVariant::Knlms {
                        eta: p.num("eta")?,
                        eps_reg: p.num("eps_reg")?,
                        coherence_mu0: p.num("coherence_mu0")?,
                    },
                    "beta" => KlmsVariant::Beta {
                        beta: p.num("beta")?,
                        coherence_mu0: p.opt_num("coherence_mu0")?,
                    },
                    other => return Err(KafError::arg(format!("unknown variant `{other}`"))),
                };
                Ok(Snapshot::Klms(KlmsState::restore(spec, variant, dict, p.vector("alpha")?)?))
            }
            other => Err(KafError::arg(format!("unknown model `{other}`"))),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Snapshot::Gp(s) => gp_to_string(s),
            Snapshot::Klms(s) => klms_to_string(s),
        }
    }
}
