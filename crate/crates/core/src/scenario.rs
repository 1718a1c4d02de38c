//! Desk-scale water-treatment case study: a discrete three-tank plant, three
//! cyclic PLC controllers, synthesized enforcement monitors, and five attack
//! scenarios wired into the network runtime.
//!
//! Tank T1 is filled by two pumps and drained through a valve into tank T2,
//! which drains into the treatment stage; a backwash tank T3 collects
//! diverted water and pumps it back into T2. PLC1 manages T1's pumps and the
//! valve (on request), PLC2 watches T2 and requests valve openings/closings
//! over channels, PLC3 manages T3's backwash pump.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::calculus::parser::{parse_controller, CtrlParseError};
use crate::calculus::{validate_raw, Defs, Proc};
use crate::combinators::{bme, cbe, cbp, CombinatorEnv, CombinatorError};
use crate::prop::{parse_property_in, GlobalProp};
use crate::runtime::{
    mstep, net_steps_where, LogEntry, MStep, Monitored, Network, NetStep, RuntimeError, StepRule,
    TraceLog,
};
use crate::synthesis::{synthesize, SynthContext, SynthError};
use crate::trace::{Action, ActionKind};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("controller error: {0}")]
    Ctrl(String),
    #[error("property error: {0}")]
    Prop(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("unknown attack id {0}")]
    UnknownAttack(u8),
}

impl From<CtrlParseError> for ScenarioError {
    fn from(e: CtrlParseError) -> Self {
        ScenarioError::Ctrl(e.to_string())
    }
}

impl From<CombinatorError> for ScenarioError {
    fn from(e: CombinatorError) -> Self {
        ScenarioError::Prop(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Plant
// ---------------------------------------------------------------------------

/// Flow rates are percent-of-tank per plant tick; all strictly positive.
#[derive(Clone, Debug, Serialize)]
pub struct PlantConfig {
    /// Pump 1 inflow into T1.
    pub in1: f64,
    /// Pump 2 inflow into T1.
    pub in2: f64,
    /// Valve flow T1 -> T2.
    pub out_valve: f64,
    /// T2 outflow to the treatment stage.
    pub drain2: f64,
    /// Diverted inflow into the backwash tank T3.
    pub divert2: f64,
    /// Backwash pump flow T3 -> T2.
    pub back3: f64,
    /// Initial levels of T1, T2, T3.
    pub init: [f64; 3],
    /// Levels are clamped to [0, 100 + overflow_margin].
    pub overflow_margin: f64,
    /// T3 level at or below which a running backwash pump runs dry.
    pub dry_level: f64,
    /// Consecutive dry ticks before pump damage latches.
    pub dry_streak: usize,
    /// Valve state changes closer than this many clock ticks count as
    /// chattering.
    pub chatter_gap: usize,
    /// Chattering change count at which the damage flag latches.
    pub chatter_damage: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            in1: 1.2,
            in2: 1.2,
            out_valve: 1.1,
            drain2: 0.8,
            divert2: 0.4,
            back3: 0.6,
            init: [50.0, 40.0, 10.0],
            overflow_margin: 5.0,
            dry_level: 2.0,
            dry_streak: 3,
            chatter_gap: 6,
            chatter_damage: 50,
        }
    }
}

/// Per-tank low/high signal thresholds (percent).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SensorThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for SensorThresholds {
    fn default() -> Self {
        SensorThresholds { low: 20.0, high: 80.0 }
    }
}

/// Discrete plant state; levels in percent, actuators latched between ticks.
#[derive(Clone, Debug, Serialize)]
pub struct PlantState {
    pub levels: [f64; 3],
    pub pumps: [bool; 3],
    pub valve_open: bool,
    /// Latches when the corresponding level exceeds 100.
    pub overflow: [bool; 3],
    /// Latches when the backwash pump runs dry for `dry_streak` ticks.
    pub pump3_dry: bool,
    dry_run: usize,
}

impl PlantState {
    pub fn new(cfg: &PlantConfig) -> PlantState {
        PlantState {
            levels: cfg.init,
            pumps: [false; 3],
            valve_open: false,
            overflow: [false; 3],
            pump3_dry: false,
            dry_run: 0,
        }
    }
}

fn flow(on: bool, rate: f64) -> f64 {
    if on {
        rate
    } else {
        0.0
    }
}

/// One plant tick of the difference equations:
/// T1 += in1*pump1 + in2*pump2 - out_valve*valve;
/// T2 += out_valve*valve + back3*pump3 - drain2;
/// T3 += divert2 - back3*pump3.
pub fn plant_tick(s: &mut PlantState, cfg: &PlantConfig) {
    let d1 = flow(s.pumps[0], cfg.in1) + flow(s.pumps[1], cfg.in2)
        - flow(s.valve_open, cfg.out_valve);
    let d2 = flow(s.valve_open, cfg.out_valve) + flow(s.pumps[2], cfg.back3) - cfg.drain2;
    let d3 = cfg.divert2 - flow(s.pumps[2], cfg.back3);
    let cap = 100.0 + cfg.overflow_margin;
    for (i, d) in [d1, d2, d3].into_iter().enumerate() {
        s.levels[i] = (s.levels[i] + d).clamp(0.0, cap);
        if s.levels[i] > 100.0 {
            s.overflow[i] = true;
        }
    }
    if s.pumps[2] && s.levels[2] <= cfg.dry_level {
        s.dry_run += 1;
        if s.dry_run >= cfg.dry_streak {
            s.pump3_dry = true;
        }
    } else {
        s.dry_run = 0;
    }
}

/// The one available level signal per tank: `l` below low, `h` above high,
/// `m` in between; boundary levels resolve to the non-extreme signal `m`.
pub fn sample_sensors(s: &PlantState, th: &SensorThresholds) -> [Action; 3] {
    let mut out = Vec::with_capacity(3);
    for i in 0..3 {
        let band = if s.levels[i] < th.low {
            "l"
        } else if s.levels[i] > th.high {
            "h"
        } else {
            "m"
        };
        out.push(Action::sensor(&format!("{band}{}", i + 1)));
    }
    [out[0].clone(), out[1].clone(), out[2].clone()]
}

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

const PLC1_SRC: &str = "
# Tank T1: two inlet pumps and the valve towards T2. Below low the pumps go
# on and the valve is forced shut; in the mid and high bands the controller
# serves open/close requests from the T2 controller. Note that the mid-band
# timeout of the on-state keeps the pumps' previous state by re-entering
# P1on even though it emits off commands; this mirrors the printed source
# equations as-is.
P1off = tick . sens{
  l1 -> act a:on1 . act a:on2 . act a:close_v . end . P1on ;
  m1 -> in{ c?open -> act a:off1 . act a:off2 . act a:open_v . end . P1off ;
            c?close -> act a:off1 . act a:off2 . act a:close_v . end . P1off }
        else act a:off1 . act a:off2 . act a:close_v . end . P1off ;
  h1 -> in{ c?open -> act a:off1 . act a:off2 . act a:open_v . end . P1off ;
            c?close -> act a:off1 . act a:off2 . act a:close_v . end . P1off }
        else act a:off1 . act a:off2 . act a:close_v . end . P1off
} else act a:off1 . act a:off2 . act a:close_v . end . P1off
P1on = tick . sens{
  l1 -> act a:on1 . act a:on2 . act a:close_v . end . P1on ;
  m1 -> in{ c?open -> act a:on1 . act a:on2 . act a:open_v . end . P1on ;
            c?close -> act a:on1 . act a:on2 . act a:close_v . end . P1on }
        else act a:on1 . act a:on2 . act a:close_v . end . P1on ;
  h1 -> in{ c?open -> act a:off1 . act a:off2 . act a:open_v . end . P1off ;
            c?close -> act a:off1 . act a:off2 . act a:close_v . end . P1off }
        else act a:off1 . act a:off2 . act a:close_v . end . P1off
} else act a:off1 . act a:off2 . act a:close_v . end . P1on
";

const PLC2_SRC: &str = "
# Tank T2: requests valve openings while filling (up-state) and closings
# while emptying (down-state); requests are sent over the open/close
# channels under timeout.
P2up = tick . sens{
  l2 -> out c!open . end . P2up else end . P2up ;
  m2 -> out c!open . end . P2up else end . P2up ;
  h2 -> out c!close . end . P2down else end . P2up
} else end . P2up
P2down = tick . sens{
  l2 -> out c!open . end . P2up else end . P2down ;
  m2 -> out c!close . end . P2down else end . P2down ;
  h2 -> out c!close . end . P2down else end . P2down
} else end . P2down
";

const PLC3_SRC: &str = "
# Backwash tank T3: the pump towards T2 goes on at the high band and stays
# on until the level falls below low.
P3off = tick . sens{
  l3 -> act a:off3 . end . P3off ;
  m3 -> act a:off3 . end . P3off ;
  h3 -> act a:on3 . end . P3on
} else act a:off3 . end . P3off
P3on = tick . sens{
  l3 -> act a:off3 . end . P3off ;
  m3 -> act a:on3 . end . P3on ;
  h3 -> act a:on3 . end . P3on
} else act a:off3 . end . P3off
";

/// Builds PLC `i` (1-based) from its source equations.
pub fn build_plc(i: usize) -> (Proc, Defs) {
    let src = match i {
        1 => PLC1_SRC,
        2 => PLC2_SRC,
        3 => PLC3_SRC,
        _ => panic!("plc index {i} out of range 1..=3"),
    };
    parse_controller(src).expect("builtin controller parses")
}

/// Pads every non-timeout scan-cycle path with one tick before `end`, making
/// every cycle exactly two clock ticks long.
///
/// As printed, a successful cycle finishes one tick earlier than a cycle
/// whose sensing or communication timed out, so a single missed channel
/// rendezvous permanently shifts one controller's send/listen window against
/// its partner's and the handshake never recovers. Constant-length cycles
/// keep all controllers' windows aligned for good.
pub fn align_scan_cycles(defs: &Defs) -> Defs {
    fn pad(p: &Proc) -> Proc {
        match p {
            Proc::Var(x) => Proc::Var(x.clone()),
            Proc::Tick(w) => Proc::Tick(Box::new(pad(w))),
            Proc::SensTimeout { branches, timeout } => Proc::SensTimeout {
                branches: branches.iter().map(|(g, b)| (g.clone(), pad(b))).collect(),
                timeout: Box::new(spine(timeout)),
            },
            Proc::ChanInTimeout { branches, timeout } => Proc::ChanInTimeout {
                branches: branches.iter().map(|(g, b)| (g.clone(), pad(b))).collect(),
                timeout: Box::new(spine(timeout)),
            },
            Proc::ChanOutTimeout { channel, then, timeout } => Proc::ChanOutTimeout {
                channel: channel.clone(),
                then: Box::new(pad(then)),
                timeout: Box::new(spine(timeout)),
            },
            Proc::ActOut { actuator, then } => Proc::ActOut {
                actuator: actuator.clone(),
                then: Box::new(pad(then)),
            },
            Proc::EndThen(x) => Proc::Tick(Box::new(Proc::EndThen(x.clone()))),
        }
    }
    // A timeout continuation already spent the extra tick; its action spine
    // stays unpadded.
    fn spine(p: &Proc) -> Proc {
        match p {
            Proc::ActOut { actuator, then } => Proc::ActOut {
                actuator: actuator.clone(),
                then: Box::new(spine(then)),
            },
            Proc::EndThen(x) => Proc::EndThen(x.clone()),
            other => pad(other),
        }
    }
    Defs(defs.0.iter().map(|(k, v)| (k.clone(), pad(v))).collect())
}

// ---------------------------------------------------------------------------
// Attacks
// ---------------------------------------------------------------------------

/// An attack on one PLC; timing parameters are in scan cycles.
#[derive(Clone, Debug, Serialize)]
pub struct AttackSpec {
    /// 1 command drop, 2 sensor offset, 3 command injection,
    /// 4 sensor alternation, 5 pump-on injection.
    pub id: u8,
    /// Attacked PLC, 0-based node index.
    pub target: usize,
    /// Healthy cycles before a persistent attack activates (ids 1, 2, 5).
    pub silent: usize,
    /// Stand-by phase length for alternating attacks (ids 3, 4).
    pub standby: usize,
    /// Active phase length for alternating attacks (ids 3, 4).
    pub active: usize,
}

/// Scan cycles take 100 ms, so attack seconds map to 10 cycles each, then
/// the desk scale factor shrinks them.
fn scaled_cycles(seconds: f64, scale: f64) -> usize {
    ((seconds * 10.0 * scale).round() as usize).max(1)
}

impl AttackSpec {
    /// The five attacks with their nominal timings, scaled.
    pub fn preset(id: u8, scale: f64) -> Result<AttackSpec, ScenarioError> {
        let (target, silent, standby, active) = match id {
            1 => (0, scaled_cycles(500.0, scale), 1, 1),
            2 => (1, scaled_cycles(500.0, scale), 1, 1),
            3 => (0, 1, scaled_cycles(70.0, scale), scaled_cycles(30.0, scale)),
            4 => (1, 1, scaled_cycles(70.0, scale), scaled_cycles(30.0, scale)),
            5 => (2, scaled_cycles(500.0, scale), 1, 1),
            _ => return Err(ScenarioError::UnknownAttack(id)),
        };
        Ok(AttackSpec { id, target, silent, standby, active })
    }
}

fn drop_actuator(p: &Proc, name: &str) -> Proc {
    match p {
        Proc::ActOut { actuator, then } if actuator.name == name => drop_actuator(then, name),
        Proc::ActOut { actuator, then } => Proc::ActOut {
            actuator: actuator.clone(),
            then: Box::new(drop_actuator(then, name)),
        },
        Proc::Var(x) => Proc::Var(x.clone()),
        Proc::Tick(w) => Proc::Tick(Box::new(drop_actuator(w, name))),
        Proc::SensTimeout { branches, timeout } => Proc::SensTimeout {
            branches: branches.iter().map(|(g, b)| (g.clone(), drop_actuator(b, name))).collect(),
            timeout: Box::new(drop_actuator(timeout, name)),
        },
        Proc::ChanInTimeout { branches, timeout } => Proc::ChanInTimeout {
            branches: branches.iter().map(|(g, b)| (g.clone(), drop_actuator(b, name))).collect(),
            timeout: Box::new(drop_actuator(timeout, name)),
        },
        Proc::ChanOutTimeout { channel, then, timeout } => Proc::ChanOutTimeout {
            channel: channel.clone(),
            then: Box::new(drop_actuator(then, name)),
            timeout: Box::new(drop_actuator(timeout, name)),
        },
        Proc::EndThen(x) => Proc::EndThen(x.clone()),
    }
}

fn remap_actuator(p: &Proc, from: &str, to: &str) -> Proc {
    match p {
        Proc::ActOut { actuator, then } => {
            let a = if actuator.name == from { Action::actuator(to) } else { actuator.clone() };
            Proc::ActOut { actuator: a, then: Box::new(remap_actuator(then, from, to)) }
        }
        Proc::Var(x) => Proc::Var(x.clone()),
        Proc::Tick(w) => Proc::Tick(Box::new(remap_actuator(w, from, to))),
        Proc::SensTimeout { branches, timeout } => Proc::SensTimeout {
            branches: branches
                .iter()
                .map(|(g, b)| (g.clone(), remap_actuator(b, from, to)))
                .collect(),
            timeout: Box::new(remap_actuator(timeout, from, to)),
        },
        Proc::ChanInTimeout { branches, timeout } => Proc::ChanInTimeout {
            branches: branches
                .iter()
                .map(|(g, b)| (g.clone(), remap_actuator(b, from, to)))
                .collect(),
            timeout: Box::new(remap_actuator(timeout, from, to)),
        },
        Proc::ChanOutTimeout { channel, then, timeout } => Proc::ChanOutTimeout {
            channel: channel.clone(),
            then: Box::new(remap_actuator(then, from, to)),
            timeout: Box::new(remap_actuator(timeout, from, to)),
        },
        Proc::EndThen(x) => Proc::EndThen(x.clone()),
    }
}

/// Injects one actuator command at the close of every cycle path, just
/// before the final (possibly padded) `end`.
fn inject_each_cycle(p: &Proc, name: &str) -> Proc {
    let cmd = Action::actuator(name);
    match p {
        Proc::Tick(w) if matches!(**w, Proc::EndThen(_)) => Proc::ActOut {
            actuator: cmd,
            then: Box::new(p.clone()),
        },
        Proc::EndThen(_) => Proc::ActOut { actuator: cmd, then: Box::new(p.clone()) },
        Proc::Var(x) => Proc::Var(x.clone()),
        Proc::Tick(w) => Proc::Tick(Box::new(inject_each_cycle(w, name))),
        Proc::ActOut { actuator, then } => Proc::ActOut {
            actuator: actuator.clone(),
            then: Box::new(inject_each_cycle(then, name)),
        },
        Proc::SensTimeout { branches, timeout } => Proc::SensTimeout {
            branches: branches
                .iter()
                .map(|(g, b)| (g.clone(), inject_each_cycle(b, name)))
                .collect(),
            timeout: Box::new(inject_each_cycle(timeout, name)),
        },
        Proc::ChanInTimeout { branches, timeout } => Proc::ChanInTimeout {
            branches: branches
                .iter()
                .map(|(g, b)| (g.clone(), inject_each_cycle(b, name)))
                .collect(),
            timeout: Box::new(inject_each_cycle(timeout, name)),
        },
        Proc::ChanOutTimeout { channel, then, timeout } => Proc::ChanOutTimeout {
            channel: channel.clone(),
            then: Box::new(inject_each_cycle(then, name)),
            timeout: Box::new(inject_each_cycle(timeout, name)),
        },
    }
}

/// Rewires every sensing block so the branch guarded by `g` runs the
/// continuation of the branch named by `map[g]`; guards themselves stay in
/// place, so a monitor still observes the true reading.
fn remap_sensing(p: &Proc, map: &BTreeMap<String, String>) -> Proc {
    match p {
        Proc::SensTimeout { branches, timeout } => {
            let done: Vec<(Action, Proc)> =
                branches.iter().map(|(g, b)| (g.clone(), remap_sensing(b, map))).collect();
            let by_name: BTreeMap<String, Proc> =
                done.iter().map(|(g, b)| (g.name.clone(), b.clone())).collect();
            Proc::SensTimeout {
                branches: done
                    .iter()
                    .map(|(g, b)| {
                        let tgt = map.get(&g.name).unwrap_or(&g.name);
                        (g.clone(), by_name.get(tgt).cloned().unwrap_or_else(|| b.clone()))
                    })
                    .collect(),
                timeout: Box::new(remap_sensing(timeout, map)),
            }
        }
        Proc::Var(x) => Proc::Var(x.clone()),
        Proc::Tick(w) => Proc::Tick(Box::new(remap_sensing(w, map))),
        Proc::ActOut { actuator, then } => Proc::ActOut {
            actuator: actuator.clone(),
            then: Box::new(remap_sensing(then, map)),
        },
        Proc::ChanInTimeout { branches, timeout } => Proc::ChanInTimeout {
            branches: branches.iter().map(|(g, b)| (g.clone(), remap_sensing(b, map))).collect(),
            timeout: Box::new(remap_sensing(timeout, map)),
        },
        Proc::ChanOutTimeout { channel, then, timeout } => Proc::ChanOutTimeout {
            channel: channel.clone(),
            then: Box::new(remap_sensing(then, map)),
            timeout: Box::new(remap_sensing(timeout, map)),
        },
        Proc::EndThen(x) => Proc::EndThen(x.clone()),
    }
}

fn map_defs(defs: &Defs, f: impl Fn(&Proc) -> Proc) -> Defs {
    Defs(defs.0.iter().map(|(k, v)| (k.clone(), f(v))).collect())
}

fn sensor_map(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
    entries.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// All code variants an attack switches between: index 0 is the healthy
/// code, the rest are the compromised phases.
fn attack_variants(healthy: &Defs, a: &AttackSpec) -> Result<Vec<Defs>, ScenarioError> {
    Ok(match a.id {
        // DoS: close-valve commands are dropped on the floor.
        1 => vec![healthy.clone(), map_defs(healthy, |p| drop_actuator(p, "close_v"))],
        // Integrity: a -30 offset on the measured T2 level. At the signal
        // granularity the offset shifts every reading one band down: the
        // high band behaves like mid and (conservatively) mid like low.
        2 => {
            let m = sensor_map(&[("m2", "l2"), ("h2", "m2")]);
            vec![healthy.clone(), map_defs(healthy, |p| remap_sensing(p, &m))]
        }
        // Injection: alternating open/close valve commands appended to every
        // cycle of the active phases.
        3 => vec![
            healthy.clone(),
            map_defs(healthy, |p| inject_each_cycle(p, "open_v")),
            map_defs(healthy, |p| inject_each_cycle(p, "close_v")),
        ],
        // Integrity: the measured T2 level alternates between the low and
        // high bands during active phases, whatever the true reading is.
        4 => {
            let lo = sensor_map(&[("l2", "l2"), ("m2", "l2"), ("h2", "l2")]);
            let hi = sensor_map(&[("l2", "h2"), ("m2", "h2"), ("h2", "h2")]);
            vec![
                healthy.clone(),
                map_defs(healthy, |p| remap_sensing(p, &lo)),
                map_defs(healthy, |p| remap_sensing(p, &hi)),
            ]
        }
        // Injection: pump-on commands regardless of the backwash level.
        5 => vec![healthy.clone(), map_defs(healthy, |p| remap_actuator(p, "off3", "on3"))],
        id => return Err(ScenarioError::UnknownAttack(id)),
    })
}

/// Which code variant runs in the given scan cycle.
fn variant_index(a: &AttackSpec, cycle: usize) -> usize {
    match a.id {
        1 | 2 | 5 => usize::from(cycle >= a.silent),
        3 | 4 => {
            let phase = cycle % (a.standby + a.active);
            if phase < a.standby {
                0
            } else {
                1 + cycle % 2
            }
        }
        _ => 0,
    }
}

/// The compromised controller an attack installs (its primary active
/// variant; alternating attacks cycle between two such variants).
pub fn apply_attack(plc: &(Proc, Defs), a: &AttackSpec) -> Result<(Proc, Defs), ScenarioError> {
    let variants = attack_variants(&plc.1, a)?;
    Ok((plc.0.clone(), variants[1].clone()))
}

// ---------------------------------------------------------------------------
// Derived property parameters
// ---------------------------------------------------------------------------

/// Persistence windows of the enforced properties, in scan cycles, derived
/// from the plant dynamics. Each is half the relevant drain/fill time
/// (strictly less than it, as required), capped to keep monitors small.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivedParams {
    /// Pumps-off persistence after h1; less than the cycles to empty T1
    /// from the high mark with pumps off and valve open.
    pub m_pumps_off: usize,
    /// Close-request persistence after h2; less than the cycles to empty T2
    /// from the high mark with the valve closed.
    pub u_close: usize,
    /// Pump-on persistence after h3; less than the cycles to empty T3 from
    /// the high mark with the backwash pump on.
    pub w_pump_on: usize,
    /// Pump-off persistence after l3; less than the cycles to fill T3 with
    /// the backwash pump off.
    pub w_pump_off: usize,
    /// Valve-command mutual-exclusion window (the nominal 100 cycles,
    /// scaled).
    pub bme_window: usize,
}

const PARAM_CAP: usize = 12;

/// Plant ticks until `done`, starting from `state`, at most `cap`.
fn ticks_until(mut state: PlantState, cfg: &PlantConfig, done: impl Fn(&PlantState) -> bool) -> usize {
    for t in 1..=100_000 {
        plant_tick(&mut state, cfg);
        if done(&state) {
            return t;
        }
    }
    100_000
}

fn half_cycles(ticks: usize) -> usize {
    let cycles = ticks.div_ceil(2);
    (cycles / 2).clamp(1, PARAM_CAP)
}

/// Simulates the relevant drain/fill times with the plant equations and
/// takes strict-inequality margins.
pub fn derive_params(plant: &PlantConfig, th: &SensorThresholds, scale: f64) -> DerivedParams {
    let base = PlantState::new(plant);
    let with = |levels: [f64; 3], pumps: [bool; 3], valve: bool| PlantState {
        levels,
        pumps,
        valve_open: valve,
        ..base.clone()
    };
    let mid = 50.0;
    let empty_t1 = ticks_until(
        with([th.high, mid, mid], [false, false, false], true),
        plant,
        |s| s.levels[0] <= 0.0,
    );
    let empty_t2 = ticks_until(
        with([mid, th.high, mid], [false, false, false], false),
        plant,
        |s| s.levels[1] <= 0.0,
    );
    let empty_t3 = ticks_until(
        with([mid, mid, th.high], [false, false, true], false),
        plant,
        |s| s.levels[2] <= 0.0,
    );
    let fill_t3 = ticks_until(
        with([mid, mid, th.low], [false, false, false], false),
        plant,
        |s| s.levels[2] >= 100.0,
    );
    DerivedParams {
        m_pumps_off: half_cycles(empty_t1),
        u_close: half_cycles(empty_t2),
        w_pump_on: half_cycles(empty_t3),
        w_pump_off: half_cycles(fill_t3),
        bme_window: ((100.0 * scale).round() as usize).max(1),
    }
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

/// Builds one of the named case-study properties over the given environment.
pub fn preset_property(
    name: &str,
    env: &CombinatorEnv,
    dp: &DerivedParams,
) -> Result<Option<GlobalProp>, ScenarioError> {
    let star = GlobalProp::Star;
    let p = match name {
        // Pumps stay commanded off after a high T1 reading.
        "e1" => GlobalProp::inter(
            star(cbp(env, &Action::sensor("h1"), &Action::actuator("off1"), 1, dp.m_pumps_off)?),
            star(cbp(env, &Action::sensor("h1"), &Action::actuator("off2"), 1, dp.m_pumps_off)?),
        ),
        // e1 and: a received close request is followed by an actual valve
        // closure within the same cycle.
        "e1'" => GlobalProp::inter(
            GlobalProp::inter(
                star(cbp(
                    env,
                    &Action::sensor("h1"),
                    &Action::actuator("off1"),
                    1,
                    dp.m_pumps_off,
                )?),
                star(cbp(
                    env,
                    &Action::sensor("h1"),
                    &Action::actuator("off2"),
                    1,
                    dp.m_pumps_off,
                )?),
            ),
            star(cbe(env, &Action::recv("close"), &Action::actuator("close_v"), 1, 1)?),
        ),
        // Open and close valve commands exclude one another within the
        // scaled 100-cycle window.
        "e1''" => star(bme(
            env,
            &BTreeSet::from([Action::actuator("open_v"), Action::actuator("close_v")]),
            dp.bme_window,
        )?),
        // Close requests persist after a high T2 reading.
        "e2" => star(cbp(env, &Action::sensor("h2"), &Action::send("close"), 1, dp.u_close)?),
        // The backwash pump stays commanded on after a high T3 reading.
        "e3" => star(cbp(env, &Action::sensor("h3"), &Action::actuator("on3"), 1, dp.w_pump_on)?),
        // The backwash pump stays commanded off after a low T3 reading.
        "e3'" => {
            star(cbp(env, &Action::sensor("l3"), &Action::actuator("off3"), 1, dp.w_pump_off)?)
        }
        _ => return Ok(None),
    };
    Ok(Some(p))
}

fn resolve_property(
    text: &str,
    env: &CombinatorEnv,
    dp: &DerivedParams,
) -> Result<Option<GlobalProp>, ScenarioError> {
    let text = text.trim();
    if text.is_empty() || text == "none" {
        return Ok(None);
    }
    if let Some(p) = preset_property(text, env, dp)? {
        return Ok(Some(p));
    }
    parse_property_in(text, env)
        .map(Some)
        .map_err(|e| ScenarioError::Prop(format!("property `{text}`: {e}")))
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub thresholds: SensorThresholds,
    /// Per-PLC enforced property: `none`, a preset name (`e1`, `e1'`,
    /// `e1''`, `e2`, `e3`, `e3'`), or a property-DSL expression.
    pub properties: [String; 3],
    pub attack: Option<AttackSpec>,
    /// Run length in clock ticks (two per scan cycle).
    pub horizon: usize,
    pub seed: u64,
    /// Scale factor applied to the nominal attack/window timings.
    pub scale: f64,
    /// Expectations checked by the command-line front end.
    pub expect: Vec<(String, String)>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            plant: PlantConfig::default(),
            thresholds: SensorThresholds::default(),
            properties: ["none".into(), "none".into(), "none".into()],
            attack: None,
            horizon: 2000,
            seed: 1,
            scale: 0.1,
            expect: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Rejects configs that violate the qualitative plant constraints.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let p = &self.plant;
        let t = &self.thresholds;
        let bad = |msg: String| Err(ScenarioError::Config(msg));
        for (name, v) in [
            ("in1", p.in1),
            ("in2", p.in2),
            ("out_valve", p.out_valve),
            ("drain2", p.drain2),
            ("divert2", p.divert2),
            ("back3", p.back3),
        ] {
            if !(v > 0.0) {
                return bad(format!("plant rate {name} must be positive"));
            }
        }
        if !(t.low > 0.0 && t.low < t.high && t.high < 100.0) {
            return bad("thresholds must satisfy 0 < low < high < 100".into());
        }
        if p.in1 + p.in2 <= p.out_valve {
            return bad("inflow into T1 must exceed the valve outflow".into());
        }
        if p.back3 <= p.divert2 {
            return bad("backwash pump must outrun the diverted inflow into T3".into());
        }
        // T2 must absorb a full backwash of T3 without overflowing.
        let rise = (p.back3 - p.drain2).max(0.0) * (100.0 / (p.back3 - p.divert2));
        if rise > 100.0 - t.high {
            return bad("T2 cannot absorb the whole content of T3".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.scale > 0.0) {
            return bad("scale must be positive".into());
        }
        if let Some(a) = &self.attack {
            if !(1..=5).contains(&a.id) {
                return Err(ScenarioError::UnknownAttack(a.id));
            }
            if a.target > 2 {
                return bad(format!("attack target {} out of range 0..=2", a.target));
            }
            if a.silent == 0 || a.standby == 0 || a.active == 0 {
                return bad("attack timing parameters must be at least 1".into());
            }
        }
        Ok(())
    }
}

/// Parses the key-value scenario config format:
///
/// ```text
/// [plant]
/// in1 = 1.2
/// [thresholds]
/// low = 20
/// [properties]
/// plc1 = e1'
/// [attack]
/// id = 1
/// [run]
/// horizon = 2000
/// [expect]
/// overflow_t2 = false
/// ```
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::default();
    let mut section = String::new();
    let mut attack_keys: BTreeMap<String, String> = BTreeMap::new();
    let bad = |line: usize, msg: String| ScenarioError::Config(format!("line {line}: {msg}"));
    let mut pending: Vec<(usize, String, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !["plant", "thresholds", "plcs", "properties", "attack", "run", "expect"]
                .contains(&section.as_str())
            {
                return Err(bad(ln + 1, format!("unknown section `{section}`")));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(bad(ln + 1, format!("expected `key = value`, got `{line}`")));
        };
        pending.push((ln + 1, format!("{section}.{}", k.trim()), v.trim().to_string()));
    }
    // [run] scale must be known before the attack preset is built.
    for (ln, key, v) in &pending {
        if let Some(k) = key.strip_prefix("run.") {
            let num =
                || v.parse::<f64>().map_err(|_| bad(*ln, format!("bad number `{v}` for {key}")));
            match k {
                "horizon" => cfg.horizon = num()? as usize,
                "seed" => cfg.seed = num()? as u64,
                "scale" => cfg.scale = num()?,
                _ => return Err(bad(*ln, format!("unknown key `{key}`"))),
            }
        }
    }
    for (ln, key, v) in &pending {
        let num = || v.parse::<f64>().map_err(|_| bad(*ln, format!("bad number `{v}` for {key}")));
        match key.as_str() {
            "plant.in1" => cfg.plant.in1 = num()?,
            "plant.in2" => cfg.plant.in2 = num()?,
            "plant.out_valve" => cfg.plant.out_valve = num()?,
            "plant.drain2" => cfg.plant.drain2 = num()?,
            "plant.divert2" => cfg.plant.divert2 = num()?,
            "plant.back3" => cfg.plant.back3 = num()?,
            "plant.init_t1" => cfg.plant.init[0] = num()?,
            "plant.init_t2" => cfg.plant.init[1] = num()?,
            "plant.init_t3" => cfg.plant.init[2] = num()?,
            "plant.overflow_margin" => cfg.plant.overflow_margin = num()?,
            "plant.dry_level" => cfg.plant.dry_level = num()?,
            "plant.dry_streak" => cfg.plant.dry_streak = num()? as usize,
            "plant.chatter_gap" => cfg.plant.chatter_gap = num()? as usize,
            "plant.chatter_damage" => cfg.plant.chatter_damage = num()? as usize,
            "thresholds.low" => cfg.thresholds.low = num()?,
            "thresholds.high" => cfg.thresholds.high = num()?,
            "plcs.count" => {
                if num()? as usize != 3 {
                    return Err(bad(*ln, "only the three built-in PLCs are supported".into()));
                }
            }
            "properties.plc1" => cfg.properties[0] = v.clone(),
            "properties.plc2" => cfg.properties[1] = v.clone(),
            "properties.plc3" => cfg.properties[2] = v.clone(),
            _ if key.starts_with("attack.") => {
                attack_keys.insert(key["attack.".len()..].to_string(), v.clone());
            }
            _ if key.starts_with("run.") => {} // handled above
            _ if key.starts_with("expect.") => {
                cfg.expect.push((key["expect.".len()..].to_string(), v.clone()));
            }
            _ => return Err(bad(*ln, format!("unknown key `{key}`"))),
        }
    }
    if let Some(id) = attack_keys.get("id") {
        let id: u8 = id
            .parse()
            .map_err(|_| ScenarioError::Config(format!("bad attack id `{id}`")))?;
        let mut a = AttackSpec::preset(id, cfg.scale)?;
        for (k, v) in &attack_keys {
            if k == "id" {
                continue;
            }
            let n: usize = v
                .parse()
                .map_err(|_| ScenarioError::Config(format!("bad number `{v}` for attack.{k}")))?;
            match k.as_str() {
                "target" => a.target = n,
                "silent" => a.silent = n,
                "standby" => a.standby = n,
                "active" => a.active = n,
                _ => return Err(ScenarioError::Config(format!("unknown key `attack.{k}`"))),
            }
        }
        cfg.attack = Some(a);
    } else if !attack_keys.is_empty() {
        return Err(ScenarioError::Config("attack section needs an `id`".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Scenario run
// ---------------------------------------------------------------------------

/// Outcome of one scenario run.
#[derive(Clone, Debug)]
pub struct ScenarioReport {
    pub overflow: [bool; 3],
    pub pump3_dry: bool,
    /// Valve state changes that happened within the chatter gap of the
    /// previous change.
    pub chattering_count: usize,
    /// Latched when the chattering count reaches the damage threshold.
    pub chattering: bool,
    /// Per node: (suppressed, inserted) enforcement interventions.
    pub mitigations: [(usize, usize); 3],
    pub stuck_at: Option<usize>,
    pub final_levels: [f64; 3],
    pub params: DerivedParams,
    /// One row per clock tick: levels and actuator states.
    pub levels_csv: String,
    pub log: TraceLog,
}

#[derive(Serialize)]
struct ScenarioSummary<'a> {
    overflow: [bool; 3],
    pump3_dry: bool,
    chattering_count: usize,
    chattering: bool,
    mitigations: [(usize, usize); 3],
    stuck_at: Option<usize>,
    final_levels: [f64; 3],
    params: &'a DerivedParams,
}

impl ScenarioReport {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioSummary {
            overflow: self.overflow,
            pump3_dry: self.pump3_dry,
            chattering_count: self.chattering_count,
            chattering: self.chattering,
            mitigations: self.mitigations,
            stuck_at: self.stuck_at,
            final_levels: self.final_levels,
            params: &self.params,
        })
        .expect("summary serializes")
    }
}

/// True iff the actuator command changes the plant's actuator state.
fn apply_actuator(s: &mut PlantState, name: &str) -> bool {
    let slot: &mut bool;
    let val: bool;
    match name {
        "on1" => (slot, val) = (&mut s.pumps[0], true),
        "off1" => (slot, val) = (&mut s.pumps[0], false),
        "on2" => (slot, val) = (&mut s.pumps[1], true),
        "off2" => (slot, val) = (&mut s.pumps[1], false),
        "on3" => (slot, val) = (&mut s.pumps[2], true),
        "off3" => (slot, val) = (&mut s.pumps[2], false),
        "open_v" => (slot, val) = (&mut s.valve_open, true),
        "close_v" => (slot, val) = (&mut s.valve_open, false),
        _ => return false,
    }
    let changed = *slot != val;
    *slot = val;
    changed
}

/// Runs the plant, the (possibly attacked) PLCs and their monitors together.
///
/// Each clock tick the plant integrates the difference equations and
/// publishes one level signal per tank; only that signal is admissible as a
/// sensor read in the following time slot. Actuator commands that reach the
/// plant (allowed or inserted, never suppressed) update the actuator state,
/// effective at the next plant tick. Channel sends inserted by a monitor are
/// delivered through a short-lived network buffer, since the frozen
/// controller cannot take part in a rendezvous on the monitor's behalf.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    cfg.validate()?;
    let params = derive_params(&cfg.plant, &cfg.thresholds, cfg.scale);

    // Controllers, their attack variants, and their monitors.
    let mut variants: Vec<Vec<Rc<Defs>>> = Vec::new();
    let mut nodes: Vec<Monitored> = Vec::new();
    for i in 0..3 {
        let (init, defs) = build_plc(i + 1);
        let defs = align_scan_cycles(&defs);
        let mut vs = vec![defs.clone()];
        if let Some(a) = &cfg.attack {
            if a.target == i {
                vs = attack_variants(&defs, a)?;
            }
        }
        let mut alphabet = BTreeSet::new();
        let mut maxa = 1;
        for v in &vs {
            let report = validate_raw(&init, v).map_err(|e| ScenarioError::Ctrl(e.to_string()))?;
            alphabet.extend(report.alphabet);
            maxa = maxa.max(report.maxa);
        }
        let env = CombinatorEnv::new(maxa, alphabet.iter().cloned())?;
        let node = match resolve_property(&cfg.properties[i], &env, &params)? {
            None => Monitored::plain(init, defs.clone()),
            Some(prop) => {
                let aut = synthesize(&prop, &SynthContext::new(alphabet))?;
                Monitored::new(aut, init, defs.clone())?
            }
        };
        variants.push(vs.into_iter().map(Rc::new).collect());
        nodes.push(node);
    }

    let mut net = Network::new(nodes);
    let mut plant = PlantState::new(&cfg.plant);
    let mut avail = sample_sensors(&plant, &cfg.thresholds);
    let mut log = TraceLog { entries: Vec::new(), node_count: 3 };
    let mut levels_csv =
        String::from("clock_tick,t1,t2,t3,pump1,pump2,pump3,valve,cycle_variant\n");
    let mut mitigations = [(0usize, 0usize); 3];
    let mut chattering_count = 0usize;
    let mut last_valve_change: Option<usize> = None;
    // Pending monitor-inserted channel sends: (channel, sender, expiry tick).
    let mut buffer: VecDeque<(String, usize, usize)> = VecDeque::new();
    let mut stuck_at = None;
    let mut cur_variant = 0usize;
    let mut step = 0usize;

    loop {
        if net.clock >= cfg.horizon {
            break;
        }
        // Attacks swap controller code at scan-cycle boundaries.
        if let Some(a) = &cfg.attack {
            if net.clock % 2 == 0 {
                let v = variant_index(a, net.clock / 2);
                if v != cur_variant {
                    net.nodes[a.target].defs = variants[a.target][v].clone();
                    cur_variant = v;
                }
            }
        }

        // Monitor-inserted sends are delivered as soon as some controller
        // listens on the channel.
        let mut chosen: Option<NetStep> = None;
        if !buffer.is_empty() {
            'deliver: for bi in 0..buffer.len() {
                let (chan, from, _) = buffer[bi].clone();
                for i in 0..net.nodes.len() {
                    for s in mstep(&net.nodes[i])? {
                        if s.action.kind == ActionKind::ChanRecv
                            && s.action.name == chan
                            && matches!(s.rule, StepRule::Allow | StepRule::Plain)
                        {
                            let mut next = net.clone();
                            next.nodes[i] = s.next;
                            chosen = Some(NetStep {
                                action: Action::tau(),
                                rule: StepRule::ChnSync,
                                nodes: vec![i, from],
                                inserted_for: Some(s.action.clone()),
                                next,
                            });
                            buffer.remove(bi);
                            break 'deliver;
                        }
                    }
                }
            }
        }

        if chosen.is_none() {
            let avail_now = avail.clone();
            // Only the plant's published signal can actually be read; the
            // controller-side action of a suppress/insert step is the one
            // the premise is about.
            let admit = |i: usize, s: &MStep| {
                let ctrl_action = match s.rule {
                    StepRule::Suppress | StepRule::Insert => {
                        s.inserted_for.as_ref().unwrap_or(&s.action)
                    }
                    _ => &s.action,
                };
                ctrl_action.kind != ActionKind::SensorRead || *ctrl_action == avail_now[i]
            };
            let steps = net_steps_where(&net, &admit)?;
            // Closed world: a lone channel half-action needs a rendezvous
            // partner, except for monitor insertions, which go through the
            // network buffer.
            let filtered: Vec<NetStep> = steps
                .into_iter()
                .filter(|s| {
                    let lone_chan = s.nodes.len() == 1
                        && matches!(s.action.kind, ActionKind::ChanSend | ActionKind::ChanRecv);
                    !lone_chan || s.rule == StepRule::Insert
                })
                .collect();
            // Deterministic schedule: tau first, then ordinary node moves.
            // Among competing insertions (one arm per event the automaton
            // could allow instead of the blocked one) prefer command and
            // send insertions; inserting a phantom sensor reading would arm
            // persistence obligations about readings that never happened.
            let rank = |s: &NetStep| -> u8 {
                if s.action.is_tau() {
                    0
                } else if s.rule == StepRule::TimeSync {
                    4
                } else if s.rule != StepRule::Insert {
                    1
                } else if s.action.kind == ActionKind::SensorRead {
                    3
                } else {
                    2
                }
            };
            chosen = filtered.iter().min_by_key(|s| rank(s)).cloned();
        }

        let Some(s) = chosen else {
            stuck_at = Some(net.clock);
            break;
        };

        match s.rule {
            StepRule::Suppress => mitigations[s.nodes[0]].0 += 1,
            StepRule::Insert => mitigations[s.nodes[0]].1 += 1,
            _ => {}
        }
        if s.rule == StepRule::Insert && s.action.kind == ActionKind::ChanSend {
            buffer.push_back((s.action.name.clone(), s.nodes[0], net.clock + 2));
        }
        if s.action.kind == ActionKind::ActuatorCmd {
            let was_valve = plant.valve_open;
            if apply_actuator(&mut plant, &s.action.name) && plant.valve_open != was_valve {
                if let Some(prev) = last_valve_change {
                    if net.clock - prev < cfg.plant.chatter_gap {
                        chattering_count += 1;
                    }
                }
                last_valve_change = Some(net.clock);
            }
        }
        log.entries.push(LogEntry {
            step,
            clock: net.clock,
            nodes: s.nodes.clone(),
            rule: s.rule,
            action: s.action.clone(),
            inserted_for: s.inserted_for.clone(),
        });
        step += 1;
        let ticked = s.rule == StepRule::TimeSync;
        net = s.next;
        if ticked {
            plant_tick(&mut plant, &cfg.plant);
            levels_csv.push_str(&format!(
                "{},{:.2},{:.2},{:.2},{},{},{},{},{}\n",
                net.clock,
                plant.levels[0],
                plant.levels[1],
                plant.levels[2],
                u8::from(plant.pumps[0]),
                u8::from(plant.pumps[1]),
                u8::from(plant.pumps[2]),
                u8::from(plant.valve_open),
                cur_variant,
            ));
            avail = sample_sensors(&plant, &cfg.thresholds);
            let now = net.clock;
            buffer.retain(|(_, _, expiry)| *expiry >= now);
        }
    }

    Ok(ScenarioReport {
        overflow: plant.overflow,
        pump3_dry: plant.pump3_dry,
        chattering_count,
        chattering: chattering_count >= cfg.plant.chatter_damage,
        mitigations,
        stuck_at,
        final_levels: plant.levels,
        params,
        levels_csv,
        log,
    })
}

/// Compares a report against `[expect]` entries; returns (key, expected,
/// actual, ok) per entry.
pub fn check_expectations(
    r: &ScenarioReport,
    expect: &[(String, String)],
) -> Vec<(String, String, String, bool)> {
    expect
        .iter()
        .map(|(k, want)| {
            let actual = match k.as_str() {
                "overflow_t1" => r.overflow[0].to_string(),
                "overflow_t2" => r.overflow[1].to_string(),
                "overflow_t3" => r.overflow[2].to_string(),
                "pump3_dry" => r.pump3_dry.to_string(),
                "chattering" => r.chattering.to_string(),
                "stuck" => if r.stuck_at.is_some() { "some" } else { "none" }.to_string(),
                "mitigated_plc1" | "mitigated_plc2" | "mitigated_plc3" => {
                    let i = k.as_bytes()[k.len() - 1] - b'1';
                    let (sup, ins) = r.mitigations[i as usize];
                    if sup + ins > 0 { "nonzero" } else { "zero" }.to_string()
                }
                _ => "unknown-key".to_string(),
            };
            let ok = actual == *want;
            (k.clone(), want.clone(), actual, ok)
        })
        .collect()
}
