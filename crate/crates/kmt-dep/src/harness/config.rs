//! Plain-text experiment configuration: `key = value` lines grouped under
//! `[section]` headers, with `#` comments. All defaults are materialized at
//! parse time so the echoed config is complete.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::depmeasure::Schedule;
use crate::error::{KmtError, Result};

#[derive(Debug, Clone)]
pub struct ProcessConfig {
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    pub lag: Option<usize>,
}

/// Which block law feeds the quantile transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockCdfKind {
    /// Gaussian for linear-normal processes, empirical otherwise.
    Auto,
    Gaussian,
    Empirical,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub p: f64,
    pub alpha: f64,
    pub n_grid: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    pub out: PathBuf,
    /// Horizon K for the per-scale condition checks.
    pub horizon: u64,
    pub process: ProcessConfig,
    pub schedule: Schedule,
    /// Replications per lag in the dependence-measure estimate.
    pub delta_reps: u64,
    /// Largest measured lag in the dependence profile.
    pub delta_lmax: u64,
    /// Inner Monte Carlo budget for conditioning without an oracle.
    pub r_inner: u64,
    pub clt_n: u64,
    pub clt_reps: u64,
    pub block_cdf: BlockCdfKind,
    /// Pre-simulated blocks per scale for empirical block laws.
    pub block_cdf_reps: u64,
    /// The full config text with defaults applied, echoed for provenance.
    pub echo: String,
}

fn bad(key: &str, reason: impl Into<String>) -> KmtError {
    KmtError::Config { key: key.into(), reason: reason.into() }
}

/// Parse one grid entry: either a plain integer or `3^k`.
fn parse_n(tok: &str) -> Result<u64> {
    let t = tok.trim();
    if let Some(rest) = t.strip_prefix("3^") {
        let k: u32 = rest
            .parse()
            .map_err(|_| bad("n_grid", format!("bad exponent in `{t}`")))?;
        if k > 37 {
            return Err(bad("n_grid", format!("3^{k} overflows the grid")));
        }
        return Ok(3u64.pow(k));
    }
    t.parse().map_err(|_| bad("n_grid", format!("`{t}` is not an integer or 3^k")))
}

/// Grids come as comma lists (`3^6,3^8,729`) or power ranges (`3^6..3^10`).
pub fn parse_n_grid(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (a.trim(), b.trim());
        let (klo, khi) = match (lo.strip_prefix("3^"), hi.strip_prefix("3^")) {
            (Some(x), Some(y)) => {
                let kx: u32 = x.parse().map_err(|_| bad("n_grid", "bad range start"))?;
                let ky: u32 = y.parse().map_err(|_| bad("n_grid", "bad range end"))?;
                (kx, ky)
            }
            _ => return Err(bad("n_grid", "ranges must use the form 3^a..3^b")),
        };
        if klo >= khi {
            return Err(bad("n_grid", "range must be increasing"));
        }
        return Ok((klo..=khi).map(|k| 3u64.pow(k)).collect());
    }
    let grid: Result<Vec<u64>> = s.split(',').map(parse_n).collect();
    let grid = grid?;
    if grid.is_empty() {
        return Err(bad("n_grid", "empty grid"));
    }
    Ok(grid)
}

/// Raw section -> key -> value view of the file.
fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut section = String::from("experiment");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(bad(
                    &format!("line {}", lineno + 1),
                    format!("malformed section header `{line}`"),
                ));
            }
            section = line[1..line.len() - 1].trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            bad(&format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
        })?;
        out.entry(section.clone())
            .or_default()
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

struct Section<'a> {
    name: &'a str,
    map: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.map.and_then(|m| m.get(key)).map(|s| s.as_str())
    }
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| bad(&format!("{}.{}", self.name, key), format!("`{v}` is not a number"))),
        }
    }
    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                bad(&format!("{}.{}", self.name, key), format!("`{v}` is not an integer"))
            }),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        fn section<'a>(
            sections: &'a BTreeMap<String, BTreeMap<String, String>>,
            name: &'a str,
        ) -> Section<'a> {
            Section { name, map: sections.get(name) }
        }
        let sec = |name: &'static str| section(&sections, name);
        for name in sections.keys() {
            if !["experiment", "process", "schedule", "clt", "sip", "depmeasure"]
                .contains(&name.as_str())
            {
                return Err(bad(name, "unknown section"));
            }
        }

        let exp = sec("experiment");
        let name = exp.get("name").unwrap_or("experiment").to_string();
        let p = exp.f64_or("p", 3.0)?;
        let alpha = exp.f64_or("alpha", 4.0)?;
        if p <= 2.0 {
            return Err(bad("experiment.p", format!("need p > 2, got {p}")));
        }
        if alpha <= p {
            return Err(bad("experiment.alpha", format!("need alpha > p, got {alpha}")));
        }
        let n_grid = parse_n_grid(exp.get("n_grid").unwrap_or("3^6..3^9"))?;
        if n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("experiment.n_grid", "grid must be strictly increasing"));
        }
        let replications = exp.u64_or("replications", 20)?;
        if replications == 0 {
            return Err(bad("experiment.replications", "must be >= 1"));
        }
        let seed = exp.u64_or("seed", 1)?;
        let out = PathBuf::from(exp.get("out").unwrap_or("out"));
        let horizon = exp.u64_or("horizon", 100)?;

        let prc = sec("process");
        let kind = prc.get("kind").unwrap_or("ar1").to_string();
        let mut params = BTreeMap::new();
        if let Some(m) = sections.get("process") {
            for (k, v) in m {
                if k == "kind" || k == "lag" {
                    continue;
                }
                let x: f64 = v
                    .parse()
                    .map_err(|_| bad(&format!("process.{k}"), format!("`{v}` is not a number")))?;
                params.insert(k.clone(), x);
            }
        }
        let lag = match prc.get("lag") {
            None => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| bad("process.lag", format!("`{v}` is not an integer")))?,
            ),
        };
        let process = ProcessConfig { kind, params, lag };

        let sch = sec("schedule");
        let log_base = match sch.get("log_base").unwrap_or("e") {
            "e" => std::f64::consts::E,
            other => other
                .parse()
                .map_err(|_| bad("schedule.log_base", format!("`{other}` is not a base")))?,
        };
        let schedule = match sch.get("case").unwrap_or("iii") {
            "i" => Schedule::CaseI { p, alpha, log_base },
            "ii" => Schedule::CaseII,
            "iii" => Schedule::CaseIII { p, alpha, log_base },
            "constant" => Schedule::Constant(sch.u64_or("m", 2)?.max(1)),
            other => {
                return Err(bad("schedule.case", format!("unknown case `{other}`")));
            }
        };
        // surface inadmissible (p, alpha, case) combinations at parse time
        let _ = schedule.m(2).map_err(|e| bad("schedule.case", e.to_string()))?;

        let dm = sec("depmeasure");
        let delta_reps = dm.u64_or("replications", 20_000)?;
        let delta_lmax = dm.u64_or("l_max", 24)?;
        let r_inner = dm.u64_or("r_inner", 32)?;

        let clt = sec("clt");
        let clt_n = clt.u64_or("n", 6561)?;
        let clt_reps = clt.u64_or("replications", 500)?;

        let sip = sec("sip");
        let block_cdf = match sip.get("block_cdf").unwrap_or("auto") {
            "auto" => BlockCdfKind::Auto,
            "gaussian" => BlockCdfKind::Gaussian,
            "empirical" => BlockCdfKind::Empirical,
            other => return Err(bad("sip.block_cdf", format!("unknown kind `{other}`"))),
        };
        let block_cdf_reps = sip.u64_or("block_cdf_replications", 10_000)?;

        let mut cfg = ExperimentConfig {
            name,
            p,
            alpha,
            n_grid,
            replications,
            seed,
            out,
            horizon,
            process,
            schedule,
            delta_reps,
            delta_lmax,
            r_inner,
            clt_n,
            clt_reps,
            block_cdf,
            block_cdf_reps,
            echo: String::new(),
        };
        cfg.echo = cfg.render();
        Ok(cfg)
    }

    /// The config with every default filled in, in parseable form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("[experiment]\n");
        s.push_str(&format!("name = {}\n", self.name));
        s.push_str(&format!("p = {}\n", self.p));
        s.push_str(&format!("alpha = {}\n", self.alpha));
        let grid: Vec<String> = self.n_grid.iter().map(|n| n.to_string()).collect();
        s.push_str(&format!("n_grid = {}\n", grid.join(",")));
        s.push_str(&format!("replications = {}\n", self.replications));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("out = {}\n", self.out.display()));
        s.push_str(&format!("horizon = {}\n", self.horizon));
        s.push_str("\n[process]\n");
        s.push_str(&format!("kind = {}\n", self.process.kind));
        for (k, v) in &self.process.params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(l) = self.process.lag {
            s.push_str(&format!("lag = {l}\n"));
        }
        s.push_str("\n[schedule]\n");
        let case = match &self.schedule {
            Schedule::CaseI { .. } => "i".to_string(),
            Schedule::CaseII => "ii".to_string(),
            Schedule::CaseIII { .. } => "iii".to_string(),
            Schedule::Constant(m) => format!("constant\nm = {m}"),
            Schedule::Explicit(_) => "explicit".to_string(),
        };
        s.push_str(&format!("case = {case}\n"));
        s.push_str("\n[depmeasure]\n");
        s.push_str(&format!("replications = {}\n", self.delta_reps));
        s.push_str(&format!("l_max = {}\n", self.delta_lmax));
        s.push_str(&format!("r_inner = {}\n", self.r_inner));
        s.push_str("\n[clt]\n");
        s.push_str(&format!("n = {}\n", self.clt_n));
        s.push_str(&format!("replications = {}\n", self.clt_reps));
        s.push_str("\n[sip]\n");
        let bc = match self.block_cdf {
            BlockCdfKind::Auto => "auto",
            BlockCdfKind::Gaussian => "gaussian",
            BlockCdfKind::Empirical => "empirical",
        };
        s.push_str(&format!("block_cdf = {bc}\n"));
        s.push_str(&format!("block_cdf_replications = {}\n", self.block_cdf_reps));
        s
    }
}
