//! A plain reference model of the version lifecycle and a driver that checks
//! a real registry against it operation by operation.

use std::collections::BTreeMap;

use ndiserve::datastore::Datastore;
use ndiserve::inference::DetectorKind;
use ndiserve::registry::{LifecycleState, NewModel, Registry};
use rand::Rng;

pub const MODELS: [&str; 3] = ["alpha", "beta", "gamma"];

#[derive(Debug, Clone)]
pub enum Op {
    Register(usize),
    /// `true` validates against a dataset where every scan succeeds.
    Validate(usize, u32, bool),
    Promote(usize, u32, bool),
    Rollback(usize),
}

pub fn random_op<R: Rng>(rng: &mut R) -> Op {
    let m = rng.gen_range(0..MODELS.len());
    let v = rng.gen_range(0..=6);
    match rng.gen_range(0..10) {
        0..=2 => Op::Register(m),
        3..=5 => Op::Validate(m, v, rng.gen_bool(0.8)),
        6..=8 => Op::Promote(m, v, rng.gen_bool(0.2)),
        _ => Op::Rollback(m),
    }
}

#[derive(Debug, Default, Clone)]
struct Version {
    state: &'static str,
    validated: bool,
}

#[derive(Debug, Default, Clone)]
struct Model {
    versions: BTreeMap<u32, Version>,
    active: Option<u32>,
    retired: Vec<u32>,
}

#[derive(Debug, Default)]
pub struct Reference {
    models: BTreeMap<usize, Model>,
}

impl Reference {
    /// Applies `op` and returns the error code the registry should report, if any.
    pub fn apply(&mut self, op: &Op) -> Result<(), &'static str> {
        match *op {
            Op::Register(m) => {
                let model = self.models.entry(m).or_default();
                let next = model.versions.keys().last().map_or(1, |v| v + 1);
                model.versions.insert(next, Version { state: "staged", validated: false });
                Ok(())
            }
            Op::Validate(m, v, ok) => {
                let model = self.models.get_mut(&m).ok_or("UnknownModel")?;
                match model.versions.get_mut(&v) {
                    Some(ver) if ver.state == "staged" => {
                        ver.validated = ok;
                        Ok(())
                    }
                    _ => Err("UnknownVersion"),
                }
            }
            Op::Promote(m, v, force) => {
                let model = self.models.get_mut(&m).ok_or("UnknownModel")?;
                let ver = model.versions.get(&v).ok_or("UnknownVersion")?;
                match ver.state {
                    "active" => return Err("AlreadyActive"),
                    "retired" => return Err("UnknownVersion"),
                    _ => {}
                }
                if !ver.validated && !force {
                    return Err("NotValidated");
                }
                if let Some(old) = model.active.replace(v) {
                    model.versions.get_mut(&old).unwrap().state = "retired";
                    model.retired.push(old);
                }
                model.versions.get_mut(&v).unwrap().state = "active";
                Ok(())
            }
            Op::Rollback(m) => {
                let model = self.models.get_mut(&m).ok_or("UnknownModel")?;
                let (Some(current), Some(target)) = (model.active, model.retired.pop()) else {
                    return Err("NothingToRollBackTo");
                };
                model.versions.get_mut(&current).unwrap().state = "retired";
                model.retired.push(current);
                model.versions.get_mut(&target).unwrap().state = "active";
                model.active = Some(target);
                Ok(())
            }
        }
    }

    /// `(model, version, state, validated)` for every known version.
    pub fn snapshot(&self) -> Vec<(String, u32, &'static str, bool)> {
        let mut out = Vec::new();
        for (m, model) in &self.models {
            for (v, ver) in &model.versions {
                out.push((MODELS[*m].to_string(), *v, ver.state, ver.validated));
            }
        }
        out.sort();
        out
    }
}

fn state_name(s: LifecycleState) -> &'static str {
    match s {
        LifecycleState::Staged => "staged",
        LifecycleState::Active => "active",
        LifecycleState::Retired => "retired",
    }
}

pub fn registry_snapshot(registry: &Registry) -> Vec<(String, u32, &'static str, bool)> {
    let mut out: Vec<_> = registry
        .list_models(true)
        .into_iter()
        .map(|d| (d.model_id, d.version, state_name(d.state), d.validated))
        .collect();
    out.sort();
    out
}

/// Runs one operation against the registry, returning `Err(code)` on failure.
pub fn run(registry: &Registry, datastore: &Datastore, op: &Op) -> Result<(), String> {
    let result = match *op {
        Op::Register(m) => registry
            .register_model(NewModel {
                model_id: MODELS[m].into(),
                display_name: format!("{} detector", MODELS[m]),
                detector: DetectorKind::Zscore,
                param_schema: Vec::new(),
            })
            .map(drop),
        Op::Validate(m, v, ok) => registry
            .validate(MODELS[m], v, if ok { "plates" } else { "wide" }, datastore)
            .map(drop),
        Op::Promote(m, v, force) => registry.promote(MODELS[m], v, force).map(drop),
        Op::Rollback(m) => registry.rollback(MODELS[m]).map(drop),
    };
    result.map_err(|e| e.code().to_string())
}

/// Invariants that must hold after every step.
pub fn check_invariants(registry: &Registry) -> Result<(), String> {
    let all = registry.list_models(true);
    for m in MODELS {
        let versions: Vec<_> = all.iter().filter(|d| d.model_id == m).collect();
        let active = versions.iter().filter(|d| d.state == LifecycleState::Active).count();
        if active > 1 {
            return Err(format!("{m} has {active} active versions"));
        }
        for (i, d) in versions.iter().enumerate() {
            if d.version as usize != i + 1 {
                return Err(format!("{m} versions are not 1..n: {:?}", versions.iter().map(|d| d.version).collect::<Vec<_>>()));
            }
        }
        match (registry.resolve_active(m), active) {
            (Ok(d), 1) if d.state == LifecycleState::Active => {}
            (Err(_), 0) => {}
            (r, n) => return Err(format!("{m}: resolve_active {:?} with {n} active", r.map(|d| d.version))),
        }
    }
    Ok(())
}

/// Runs `ops`, comparing every result and the final state with the reference.
pub fn check_sequence(registry: &Registry, datastore: &Datastore, ops: &[Op]) -> Result<(), String> {
    let mut reference = Reference::default();
    for (i, op) in ops.iter().enumerate() {
        let want = reference.apply(op).map_err(str::to_string);
        let got = run(registry, datastore, op);
        if got != want {
            return Err(format!("step {i} {op:?}: registry {got:?}, reference {want:?}"));
        }
        check_invariants(registry).map_err(|e| format!("step {i} {op:?}: {e}"))?;
    }
    let (got, want) = (registry_snapshot(registry), reference.snapshot());
    if got != want {
        return Err(format!("final state differs:\nregistry  {got:?}\nreference {want:?}"));
    }
    Ok(())
}
