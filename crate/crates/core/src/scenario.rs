//! Scenario files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment (leading comment lines are kept on round trip)
//! version = 1
//! units = si
//! [model] | [solver] | [monte_carlo] | [sweep] | [link <id>] | [junction <id>]
//! key = value
//! ```
//!
//! Values are numbers, `true`/`false`, identifiers, comma-separated lists, or
//! matrices with rows separated by `;`. Units are SI: m, s, veh/m, veh/s.
//! Diagram parameters are per lane; link quantities are lane-aggregated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constraints::ChanceSpec;
use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::link_models::{LinkCase, SmoothingSpec, TradeoffSpec};
use crate::lp::SolverOptions;
use crate::network::{FairnessPair, Junction, Link, Network, NetworkObjectiveSpec};
use crate::value_conditions::Discretization;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Maximize total outflow.
    Throughput,
    /// Total outflow with a smoothing penalty.
    MaxOutflow,
    /// Outflow against level of service.
    Tradeoff,
    Network,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Throughput => "throughput",
            ModelKind::MaxOutflow => "max_outflow",
            ModelKind::Tradeoff => "tradeoff",
            ModelKind::Network => "network",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [ModelKind::Throughput, ModelKind::MaxOutflow, ModelKind::Tradeoff, ModelKind::Network].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub horizon: f64,
    pub n_max: usize,
    pub confidence: f64,
    /// When false every spread is treated as zero.
    pub robust: bool,
    pub h: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    /// `(link a, link b, junction)` identifiers.
    pub fairness: Vec<(String, String, String)>,
    pub time_weighting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSection {
    pub samples: usize,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
    pub confidences: Vec<f64>,
}

/// Per-segment values; a single entry applies to every segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SegmentValues {
    Absolute(Vec<f64>),
    /// Multiples of a reference: the critical density for means, the mean for spreads.
    Ratio(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntryDemand {
    Capacity,
    Flow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExitDensity {
    Mean,
    Density(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSection {
    pub id: String,
    pub length: f64,
    pub segments: usize,
    pub lanes: usize,
    pub v_f: f64,
    pub rho_c: f64,
    pub rho_m: f64,
    pub rho_mean: SegmentValues,
    pub rho_std: SegmentValues,
    pub entry_demand: Option<EntryDemand>,
    pub exit_density: Option<ExitDensity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionSection {
    pub id: String,
    pub incoming: Vec<String>,
    pub outgoing: Vec<String>,
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
    pub on_ramp: bool,
    pub off_ramp: bool,
    pub ramp_priority: Option<String>,
    pub ramp_capacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub header: Vec<String>,
    pub version: u32,
    pub units: String,
    pub model: ModelSection,
    pub solver: SolverOptions,
    pub monte_carlo: Option<MonteCarloSection>,
    pub sweep: Option<SweepSection>,
    pub links: Vec<LinkSection>,
    pub junctions: Vec<JunctionSection>,
}

struct Section {
    line: usize,
    kind: String,
    id: Option<String>,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn err<T>(&self, line: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::ScenarioParse { line, msg: msg.into() })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        match self.take(key) {
            Some(v) => Ok(v),
            None => self.err(self.line, format!("[{}] is missing `{key}`", self.kind)),
        }
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.required(key)?;
        parse_num(line, &v)
    }

    fn opt_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key).map(|(line, v)| parse_num(line, &v)).transpose()
    }

    fn opt_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((_, v)) if v == "true" => Ok(true),
            Some((_, v)) if v == "false" => Ok(false),
            Some((line, v)) => self.err(line, format!("expected true or false, found `{v}`")),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            Some((k, (line, _))) => self.err(*line, format!("unknown key `{k}` in [{}]", self.kind)),
            None => Ok(()),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::ScenarioParse { line, msg: format!("cannot read `{v}` as a number") })
}

fn parse_list(line: usize, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_num(line, x)).collect()
}

fn parse_names(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn parse_matrix(line: usize, v: &str) -> Result<Vec<Vec<f64>>> {
    v.split(';').map(|row| parse_list(line, row)).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut header = Vec::new();
    let mut top = Section { line: 1, kind: "top level".into(), id: None, entries: BTreeMap::new() };
    let mut sections: Vec<Section> = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            if !seen_content {
                header.push(c.strip_prefix(' ').unwrap_or(c).to_string());
            }
            continue;
        }
        seen_content = true;
        if let Some(inner) = trimmed.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return Err(Error::ScenarioParse { line, msg: "unterminated section header".into() });
            };
            let mut parts = inner.split_whitespace();
            let kind = parts.next().unwrap_or("").to_string();
            let id = parts.next().map(str::to_string);
            if parts.next().is_some() {
                return Err(Error::ScenarioParse { line, msg: "section header takes at most one identifier".into() });
            }
            let needs_id = kind == "link" || kind == "junction";
            if !matches!(kind.as_str(), "model" | "solver" | "monte_carlo" | "sweep" | "link" | "junction") {
                return Err(Error::ScenarioParse { line, msg: format!("unknown section [{kind}]") });
            }
            if needs_id != id.is_some() {
                return Err(Error::ScenarioParse { line, msg: format!("[{kind}] {} an identifier", if needs_id { "needs" } else { "takes no" }) });
            }
            if !needs_id && sections.iter().any(|s| s.kind == kind) {
                return Err(Error::ScenarioParse { line, msg: format!("duplicate section [{kind}]") });
            }
            if needs_id && sections.iter().any(|s| (s.kind == "link" || s.kind == "junction") && s.id == id) {
                return Err(Error::ScenarioParse { line, msg: format!("duplicate identifier `{}`", id.unwrap_or_default()) });
            }
            sections.push(Section { line, kind, id, entries: BTreeMap::new() });
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(Error::ScenarioParse { line, msg: format!("expected `key = value`, found `{trimmed}`") });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() || v.is_empty() {
            return Err(Error::ScenarioParse { line, msg: "empty key or value".into() });
        }
        let target = sections.last_mut().unwrap_or(&mut top);
        if target.entries.insert(k.clone(), (line, v)).is_some() {
            return Err(Error::ScenarioParse { line, msg: format!("duplicate key `{k}`") });
        }
    }

    let version: u32 = top.num("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::ScenarioParse { line: 1, msg: format!("unsupported version {version}") });
    }
    let (uline, units) = top.required("units")?;
    if units != "si" {
        return Err(Error::ScenarioParse { line: uline, msg: format!("unsupported units `{units}`, expected si") });
    }
    top.finish()?;

    let mut model = None;
    let mut solver = SolverOptions::default();
    let mut monte_carlo = None;
    let mut sweep = None;
    let mut links = Vec::new();
    let mut junctions = Vec::new();
    for mut s in sections {
        match s.kind.as_str() {
            "model" => model = Some(parse_model(&mut s)?),
            "solver" => {
                let d = SolverOptions::default();
                solver = SolverOptions {
                    max_iterations: s.opt_num("max_iterations")?.unwrap_or(d.max_iterations),
                    feasibility_tol: s.opt_num("feasibility_tol")?.unwrap_or(d.feasibility_tol),
                    optimality_tol: s.opt_num("optimality_tol")?.unwrap_or(d.optimality_tol),
                };
            }
            "monte_carlo" => {
                monte_carlo = Some(MonteCarloSection {
                    samples: s.num("samples")?,
                    seed: s.num("seed")?,
                    sigmas: list_or(&mut s, "sigmas", &[0.0, 0.003, 0.006, 0.009, 0.012])?,
                    confidences: list_or(&mut s, "confidences", &[0.9, 0.95, 0.975])?,
                });
            }
            "sweep" => {
                sweep = Some(SweepSection {
                    sigmas: list_or(&mut s, "sigmas", &[0.003, 0.006, 0.009, 0.012])?,
                    confidences: list_or(&mut s, "confidences", &[0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.975])?,
                });
            }
            "link" => links.push(parse_link(&mut s)?),
            _ => junctions.push(parse_junction(&mut s)?),
        }
        s.finish()?;
    }
    let Some(model) = model else {
        return Err(Error::ScenarioParse { line: 1, msg: "missing [model] section".into() });
    };
    let sc = Scenario { header, version, units, model, solver, monte_carlo, sweep, links, junctions };
    sc.validate()?;
    Ok(sc)
}

fn list_or(s: &mut Section, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    match s.take(key) {
        Some((line, v)) => parse_list(line, &v),
        None => Ok(default.to_vec()),
    }
}

fn parse_model(s: &mut Section) -> Result<ModelSection> {
    let (line, kind) = s.required("kind")?;
    let Some(kind) = ModelKind::parse(&kind) else {
        return s.err(line, format!("unknown model kind `{kind}`"));
    };
    let fairness = match s.take("fairness") {
        None => Vec::new(),
        Some((line, v)) => v
            .split(';')
            .map(|item| {
                let p: Vec<&str> = item.split_whitespace().collect();
                match p[..] {
                    [a, b, j] => Ok((a.to_string(), b.to_string(), j.to_string())),
                    _ => Err(Error::ScenarioParse { line, msg: format!("fairness entry `{}` needs `link link junction`", item.trim()) }),
                }
            })
            .collect::<Result<_>>()?,
    };
    Ok(ModelSection {
        kind,
        horizon: s.num("horizon")?,
        n_max: s.num("n_max")?,
        confidence: s.num("confidence")?,
        robust: s.opt_bool("robust", true)?,
        h: s.opt_num("h")?,
        lambda: s.opt_num("lambda")?,
        eta: s.opt_num("eta")?,
        fairness,
        time_weighting: s.opt_bool("time_weighting", true)?,
    })
}

fn segment_values(s: &mut Section, abs: &str, ratio: &str) -> Result<Option<SegmentValues>> {
    match (s.take(abs), s.take(ratio)) {
        (Some((line, _)), Some(_)) => s.err(line, format!("give either `{abs}` or `{ratio}`, not both")),
        (Some((line, v)), None) => Ok(Some(SegmentValues::Absolute(parse_list(line, &v)?))),
        (None, Some((line, v))) => Ok(Some(SegmentValues::Ratio(parse_list(line, &v)?))),
        (None, None) => Ok(None),
    }
}

fn parse_link(s: &mut Section) -> Result<LinkSection> {
    let id = s.id.clone().unwrap_or_default();
    let Some(rho_mean) = segment_values(s, "rho_mean", "rho_mean_ratio")? else {
        return s.err(s.line, format!("link {id} needs `rho_mean` or `rho_mean_ratio`"));
    };
    let rho_std = segment_values(s, "rho_std", "rho_std_ratio")?.unwrap_or(SegmentValues::Absolute(vec![0.0]));
    let entry_demand = match s.take("entry_demand") {
        None => None,
        Some((_, v)) if v == "capacity" => Some(EntryDemand::Capacity),
        Some((line, v)) => Some(EntryDemand::Flow(parse_num(line, &v)?)),
    };
    let exit_density = match s.take("exit_density") {
        None => None,
        Some((_, v)) if v == "mean" => Some(ExitDensity::Mean),
        Some((line, v)) => Some(ExitDensity::Density(parse_num(line, &v)?)),
    };
    Ok(LinkSection {
        length: s.num("length")?,
        segments: s.num("segments")?,
        lanes: s.num("lanes")?,
        v_f: s.num("v_f")?,
        rho_c: s.num("rho_c")?,
        rho_m: s.num("rho_m")?,
        id,
        rho_mean,
        rho_std,
        entry_demand,
        exit_density,
    })
}

fn parse_junction(s: &mut Section) -> Result<JunctionSection> {
    let id = s.id.clone().unwrap_or_default();
    let incoming = parse_names(&s.required("incoming")?.1);
    let outgoing = parse_names(&s.required("outgoing")?.1);
    let (line, p1) = s.required("p1")?;
    let p1 = parse_matrix(line, &p1)?;
    let on_ramp = s.opt_bool("on_ramp", false)?;
    let off_ramp = s.opt_bool("off_ramp", false)?;
    let p2 = match s.take("p2") {
        Some((line, v)) => parse_list(line, &v)?,
        None => vec![0.0; outgoing.len()],
    };
    let p3 = match s.take("p3") {
        Some((line, v)) => parse_list(line, &v)?,
        None => vec![0.0; incoming.len()],
    };
    Ok(JunctionSection {
        id,
        incoming,
        outgoing,
        p1,
        p2,
        p3,
        on_ramp,
        off_ramp,
        ramp_priority: s.take("ramp_priority").map(|(_, v)| v),
        ramp_capacity: s.opt_num("ramp_capacity")?,
    })
}

impl Scenario {
    /// Canonical text; `parse_scenario(serialize())` reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for h in &self.header {
            out.push_str(&if h.is_empty() { "#\n".to_string() } else { format!("# {h}\n") });
        }
        if !self.header.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("version = {}\nunits = {}\n", self.version, self.units));
        let m = &self.model;
        out.push_str(&format!(
            "\n[model]\nkind = {}\nhorizon = {}\nn_max = {}\nconfidence = {}\nrobust = {}\n",
            m.kind.name(),
            m.horizon,
            m.n_max,
            m.confidence,
            m.robust
        ));
        for (k, v) in [("h", m.h), ("lambda", m.lambda), ("eta", m.eta)] {
            if let Some(v) = v {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        if !m.fairness.is_empty() {
            let items: Vec<String> = m.fairness.iter().map(|(a, b, j)| format!("{a} {b} {j}")).collect();
            out.push_str(&format!("fairness = {}\n", items.join("; ")));
        }
        out.push_str(&format!("time_weighting = {}\n", m.time_weighting));
        let s = &self.solver;
        out.push_str(&format!(
            "\n[solver]\nmax_iterations = {}\nfeasibility_tol = {:e}\noptimality_tol = {:e}\n",
            s.max_iterations, s.feasibility_tol, s.optimality_tol
        ));
        if let Some(mc) = &self.monte_carlo {
            out.push_str(&format!(
                "\n[monte_carlo]\nsamples = {}\nseed = {}\nsigmas = {}\nconfidences = {}\n",
                mc.samples,
                mc.seed,
                fmt_list(&mc.sigmas),
                fmt_list(&mc.confidences)
            ));
        }
        if let Some(sw) = &self.sweep {
            out.push_str(&format!("\n[sweep]\nsigmas = {}\nconfidences = {}\n", fmt_list(&sw.sigmas), fmt_list(&sw.confidences)));
        }
        for l in &self.links {
            out.push_str(&format!(
                "\n[link {}]\nlength = {}\nsegments = {}\nlanes = {}\nv_f = {}\nrho_c = {}\nrho_m = {}\n",
                l.id, l.length, l.segments, l.lanes, l.v_f, l.rho_c, l.rho_m
            ));
            let values = |name: &str, v: &SegmentValues| match v {
                SegmentValues::Absolute(x) => format!("{name} = {}\n", fmt_list(x)),
                SegmentValues::Ratio(x) => format!("{name}_ratio = {}\n", fmt_list(x)),
            };
            out.push_str(&values("rho_mean", &l.rho_mean));
            out.push_str(&values("rho_std", &l.rho_std));
            match l.entry_demand {
                Some(EntryDemand::Capacity) => out.push_str("entry_demand = capacity\n"),
                Some(EntryDemand::Flow(q)) => out.push_str(&format!("entry_demand = {q}\n")),
                None => {}
            }
            match l.exit_density {
                Some(ExitDensity::Mean) => out.push_str("exit_density = mean\n"),
                Some(ExitDensity::Density(r)) => out.push_str(&format!("exit_density = {r}\n")),
                None => {}
            }
        }
        for j in &self.junctions {
            let p1: Vec<String> = j.p1.iter().map(|r| fmt_list(r)).collect();
            out.push_str(&format!(
                "\n[junction {}]\nincoming = {}\noutgoing = {}\np1 = {}\np2 = {}\np3 = {}\non_ramp = {}\noff_ramp = {}\n",
                j.id,
                j.incoming.join(", "),
                j.outgoing.join(", "),
                p1.join("; "),
                fmt_list(&j.p2),
                fmt_list(&j.p3),
                j.on_ramp,
                j.off_ramp
            ));
            if let Some(r) = &j.ramp_priority {
                out.push_str(&format!("ramp_priority = {r}\n"));
            }
            if let Some(c) = j.ramp_capacity {
                out.push_str(&format!("ramp_capacity = {c}\n"));
            }
        }
        out
    }

    /// Checks everything that parsing alone cannot: references, shapes, and that the
    /// selected model can be built.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::ScenarioInvalid(m));
        match self.model.kind {
            ModelKind::Network => {
                if self.links.is_empty() {
                    return invalid("a network model needs links".into());
                }
                self.network().map_err(as_invalid)?;
                self.network_objective().map_err(as_invalid)?;
            }
            kind => {
                if self.links.len() != 1 || !self.junctions.is_empty() {
                    return invalid(format!("model {} takes exactly one link and no junctions", kind.name()));
                }
                self.link_case().map_err(as_invalid)?;
                match kind {
                    ModelKind::MaxOutflow => {
                        SmoothingSpec::new(self.model.h.unwrap_or(SmoothingSpec::default().h)).map_err(as_invalid)?;
                    }
                    ModelKind::Tradeoff => {
                        let Some(l) = self.model.lambda else {
                            return invalid("model tradeoff needs `lambda`".into());
                        };
                        TradeoffSpec::new(l).map_err(as_invalid)?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn link_index(&self, id: &str) -> Result<usize> {
        self.links
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::ScenarioInvalid(format!("unknown link `{id}`")))
    }

    fn junction_index(&self, id: &str) -> Result<usize> {
        self.junctions
            .iter()
            .position(|j| j.id == id)
            .ok_or_else(|| Error::ScenarioInvalid(format!("unknown junction `{id}`")))
    }

    fn build_link(&self, l: &LinkSection) -> Result<Link> {
        let lane_fd = FdParams::from_critical(l.v_f, l.rho_c, l.rho_m)?;
        let disc = Discretization::for_link(l.length, l.segments, self.model.horizon, self.model.n_max)?;
        let spread = |v: &[f64]| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; l.segments]),
                n if n == l.segments => Ok(v.to_vec()),
                n => Err(Error::ScenarioInvalid(format!("link {}: {n} values for {} segments", l.id, l.segments))),
            }
        };
        let mean = match &l.rho_mean {
            SegmentValues::Absolute(v) => spread(v)?,
            SegmentValues::Ratio(v) => spread(v)?.iter().map(|r| r * l.rho_c * l.lanes as f64).collect(),
        };
        let std = if !self.model.robust {
            vec![0.0; l.segments]
        } else {
            match &l.rho_std {
                SegmentValues::Absolute(v) => spread(v)?,
                SegmentValues::Ratio(v) => spread(v)?.iter().zip(&mean).map(|(r, m)| r * m).collect(),
            }
        };
        let chance = ChanceSpec::normal(mean, std, 1.0 - self.model.confidence)?;
        Link::new(l.id.clone(), l.lanes, &lane_fd, disc, chance)
    }

    pub fn link_case(&self) -> Result<LinkCase> {
        let Some(l) = self.links.first() else {
            return Err(Error::ScenarioInvalid("no link given".into()));
        };
        let link = self.build_link(l)?;
        Ok(LinkCase { fd: link.fd, disc: link.disc, chance: link.chance })
    }

    pub fn network(&self) -> Result<Network> {
        let links = self.links.iter().map(|l| self.build_link(l)).collect::<Result<Vec<_>>>()?;
        let idx = |ids: &[String]| ids.iter().map(|i| self.link_index(i)).collect::<Result<Vec<_>>>();
        let mut junctions = Vec::new();
        for j in &self.junctions {
            junctions.push(Junction {
                name: j.id.clone(),
                incoming: idx(&j.incoming)?,
                outgoing: idx(&j.outgoing)?,
                p1: j.p1.clone(),
                p2: j.p2.clone(),
                p3: j.p3.clone(),
                has_on_ramp: j.on_ramp,
                has_off_ramp: j.off_ramp,
                ramp_priority: j.ramp_priority.as_deref().map(|r| self.link_index(r)).transpose()?,
            });
        }
        let entry_demand = self
            .links
            .iter()
            .zip(&links)
            .map(|(s, l)| {
                s.entry_demand.map(|d| match d {
                    EntryDemand::Capacity => l.fd.capacity,
                    EntryDemand::Flow(q) => q,
                })
            })
            .collect();
        let exit_density = self
            .links
            .iter()
            .zip(&links)
            .map(|(s, l)| {
                s.exit_density.map(|d| match d {
                    ExitDensity::Mean => *l.chance.rho_mean.last().unwrap(),
                    ExitDensity::Density(r) => r,
                })
            })
            .collect();
        let on_ramp_capacity = self.junctions.iter().map(|j| j.ramp_capacity).collect();
        let net = Network { links, junctions, entry_demand, exit_density, on_ramp_capacity };
        net.validate()?;
        Ok(net)
    }

    pub fn network_objective(&self) -> Result<NetworkObjectiveSpec> {
        let fairness_pairs = self
            .model
            .fairness
            .iter()
            .map(|(a, b, j)| Ok(FairnessPair { link_a: self.link_index(a)?, link_b: self.link_index(b)?, junction: self.junction_index(j)? }))
            .collect::<Result<Vec<_>>>()?;
        let eta = self.model.eta.unwrap_or(0.0);
        if !(eta >= 0.0) {
            return Err(Error::ScenarioInvalid(format!("eta = {eta} must be nonnegative")));
        }
        Ok(NetworkObjectiveSpec { eta, fairness_pairs, time_weighting: self.model.time_weighting })
    }

    /// Replaces every link's spread by the absolute value `sigma`.
    pub fn set_sigma(&mut self, sigma: f64) {
        for l in &mut self.links {
            l.rho_std = SegmentValues::Absolute(vec![sigma]);
        }
    }
}

fn as_invalid(e: Error) -> Error {
    match e {
        Error::ScenarioInvalid(_) | Error::ScenarioParse { .. } => e,
        other => Error::ScenarioInvalid(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::vph_to_vps;

    const I880: &str = include_str!("../../../scenarios/i880_link.scn");
    const NETWORK: &str = include_str!("../../../scenarios/ca92_ca101.scn");

    #[test]
    fn bundled_files_round_trip_byte_identically() {
        for text in [I880, NETWORK] {
            let sc = parse_scenario(text).unwrap();
            assert_eq!(sc.serialize(), text);
            assert_eq!(parse_scenario(&sc.serialize()).unwrap(), sc);
        }
    }

    #[test]
    fn link_scenario_matches_the_built_in_case() {
        let sc = parse_scenario(I880).unwrap();
        let case = sc.link_case().unwrap();
        let reference = LinkCase::i880(0.012, 0.975).unwrap();
        assert_eq!(case.disc, reference.disc);
        assert!((case.fd.capacity - reference.fd.capacity).abs() < 1e-12);
        assert!((case.fd.w - reference.fd.w).abs() < 1e-12);
        for (a, b) in case.chance.rho_mean.iter().zip(&reference.chance.rho_mean) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((case.chance.z - reference.chance.z).abs() < 1e-15);
        // Four lanes at 0.0185 veh/m and 30 m/s: 2.22 veh/s, 7992 vph.
        assert!((case.fd.capacity - vph_to_vps(7992.0)).abs() < 1e-12);
    }

    #[test]
    fn network_scenario_matches_the_built_in_case() {
        let sc = parse_scenario(NETWORK).unwrap();
        let net = sc.network().unwrap();
        let reference = Network::case_study(25, true, 0.975).unwrap();
        assert_eq!(net.junctions, reference.junctions);
        assert_eq!(net.links.len(), reference.links.len());
        for (a, b) in net.links.iter().zip(&reference.links) {
            assert_eq!(a.disc, b.disc);
            for (x, y) in a.chance.rho_mean.iter().zip(&b.chance.rho_mean).chain(a.chance.rho_std.iter().zip(&b.chance.rho_std)) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert_eq!(net.entry_demand, reference.entry_demand);
        assert_eq!(net.exit_density, reference.exit_density);
        assert_eq!(sc.network_objective().unwrap(), Network::case_study_objective(0.2));
        for j in &net.junctions {
            for c in 0..j.incoming.len() {
                let col: f64 = j.p1.iter().map(|r| r[c]).sum::<f64>() + j.p3[c];
                assert!((col - 1.0).abs() < 1e-12, "{}", j.name);
            }
        }
    }

    #[test]
    fn bad_share_names_the_junction() {
        let text = NETWORK.replacen("p1 = 0.5, 0.2; 0.5, 0.8", "p1 = 0.6, 0.2; 0.5, 0.8", 1);
        assert_ne!(text, NETWORK);
        match parse_scenario(&text) {
            Err(Error::ScenarioInvalid(m)) => assert!(m.contains("node2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("version = 1\nunits = si\n[model]\nkind = throughput\nhorizon = x\n", 5),
            ("version = 1\nunits = si\n[model\n", 3),
            ("version = 1\nunits = si\n[model]\nkind = throughput\nkind = tradeoff\n", 5),
            ("version = 1\nunits = si\n[widget]\n", 3),
            ("version = 1\nunits = si\nnonsense\n", 3),
            ("version = 1\nunits = imperial\n", 2),
            ("version = 1\nunits = si\n[model]\nkind = throughput\nhorizon = 1\nn_max = 1\nconfidence = 0.9\ncolour = red\n", 8),
        ];
        for (text, line) in cases {
            match parse_scenario(text) {
                Err(Error::ScenarioParse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn model_shape_is_checked() {
        let two_links = format!("{I880}\n[link extra]\nlength = 100\nsegments = 1\nlanes = 1\nv_f = 30\nrho_c = 0.02\nrho_m = 0.1\nrho_mean = 0.01\n");
        assert!(matches!(parse_scenario(&two_links), Err(Error::ScenarioInvalid(_))));
        let no_lambda = I880.replace("kind = max_outflow", "kind = tradeoff");
        assert!(matches!(parse_scenario(&no_lambda), Err(Error::ScenarioInvalid(_))));
        let bad_ref = NETWORK.replacen("incoming = L1", "incoming = L9", 1);
        assert!(matches!(parse_scenario(&bad_ref), Err(Error::ScenarioInvalid(_))));
    }

    #[test]
    fn nonrobust_flag_zeroes_spreads() {
        let sc = parse_scenario(&NETWORK.replace("robust = true", "robust = false")).unwrap();
        assert!(sc.network().unwrap().links.iter().all(|l| l.chance.rho_std.iter().all(|&s| s == 0.0)));
    }

    #[test]
    fn sigma_override_applies_to_every_segment() {
        let mut sc = parse_scenario(I880).unwrap();
        sc.set_sigma(0.07);
        assert_eq!(sc.link_case().unwrap().chance.rho_std, vec![0.07; 6]);
        let again = parse_scenario(&sc.serialize()).unwrap();
        assert_eq!(again, sc);
    }
}
