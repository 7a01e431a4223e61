use serde::{Deserialize, Serialize};

use crate::bloch::{arm_momentum_profile, BlochSegment};
use crate::bragg::{design_pulse_pair, BraggPulse};
use crate::source::{PhysicalConstants, SourceCloud};

use super::SequenceError;

/// Largest arm separation at the final pulse for a sequence to close, m.
pub const CLOSURE_TOLERANCE: f64 = 1e-6;

/// The two arms, labelled by what the first beamsplitter did to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Diffracted,
    Undiffracted,
}

impl Arm {
    fn index(self) -> usize {
        match self {
            Arm::Diffracted => 0,
            Arm::Undiffracted => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    BraggSplit { order: u32, pulse: BraggPulse },
    Mirror { order: u32, pulse: BraggPulse },
    BlochAccel { arm: Arm, segment: BlochSegment },
    FreeEvolution { duration: f64 },
}

impl Segment {
    /// Time the segment occupies. Bragg pulses count as instantaneous.
    pub fn duration(&self) -> f64 {
        match self {
            Segment::BraggSplit { .. } | Segment::Mirror { .. } => 0.0,
            Segment::BlochAccel { segment, .. } => segment.duration(),
            Segment::FreeEvolution { duration } => *duration,
        }
    }
}

/// A segment and its start time; Bragg pulses start at their centre, s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSegment {
    pub start: f64,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<TimedSegment>,
    /// s
    pub interrogation_time: f64,
    /// Chirp applied to the Bragg frequency difference, Hz/s
    pub chirp: Option<f64>,
    /// `ħk/m`, converts arm momenta to velocities, m/s
    pub recoil_velocity: f64,
}

/// The three Bragg pulses of a Mach-Zehnder sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BraggTriple<'a> {
    pub order: u32,
    pub times: [f64; 3],
    pub pulses: [&'a BraggPulse; 3],
}

impl PulseSequence {
    pub fn new(
        segments: Vec<TimedSegment>,
        interrogation_time: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self, SequenceError> {
        let seq = Self { segments, interrogation_time, chirp: None, recoil_velocity: constants.recoil_velocity() };
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_segment(mut self, start: f64, segment: Segment) -> Result<Self, SequenceError> {
        let at = self.segments.partition_point(|s| s.start <= start);
        self.segments.insert(at, TimedSegment { start, segment });
        self.validate()?;
        Ok(self)
    }

    pub fn with_chirp(mut self, chirp: f64) -> Self {
        self.chirp = Some(chirp);
        self
    }

    /// Ordering, timing and structural checks, then closure.
    pub fn validate(&self) -> Result<(), SequenceError> {
        let t = self.interrogation_time;
        if !(t.is_finite() && t > 0.0) {
            return Err(SequenceError::InvalidInterrogation(t));
        }
        for pair in self.segments.windows(2) {
            let end = pair[0].start + pair[0].segment.duration();
            if pair[1].start < end - 1e-12 * t.max(end.abs()) {
                return Err(SequenceError::Overlap { first_end: end, next_start: pair[1].start });
            }
        }
        for s in &self.segments {
            match &s.segment {
                Segment::BraggSplit { order, pulse } | Segment::Mirror { order, pulse } => {
                    if pulse.order != *order {
                        return Err(SequenceError::Structure(format!(
                            "segment order {order} does not match pulse order {}",
                            pulse.order
                        )));
                    }
                }
                Segment::BlochAccel { segment, .. } => segment.validate()?,
                Segment::FreeEvolution { duration } => {
                    if !(duration.is_finite() && *duration >= 0.0) {
                        return Err(SequenceError::Structure(format!("free evolution of {duration} s")));
                    }
                }
            }
        }
        let triple = self.bragg_triple()?;
        for s in &self.segments {
            if let Segment::BlochAccel { .. } = s.segment {
                if s.start < triple.times[0] || s.start + s.segment.duration() > triple.times[2] {
                    return Err(SequenceError::Structure(format!(
                        "lattice segment at {} s lies outside the interferometer",
                        s.start
                    )));
                }
            }
        }
        self.trajectories().map(|_| ())
    }

    pub fn bragg_triple(&self) -> Result<BraggTriple<'_>, SequenceError> {
        let bragg: Vec<(&TimedSegment, bool)> = self
            .segments
            .iter()
            .filter_map(|s| match s.segment {
                Segment::BraggSplit { .. } => Some((s, false)),
                Segment::Mirror { .. } => Some((s, true)),
                _ => None,
            })
            .collect();
        let shape: Vec<bool> = bragg.iter().map(|b| b.1).collect();
        if shape != [false, true, false] {
            return Err(SequenceError::Structure(
                "expected beamsplitter, mirror, beamsplitter".into(),
            ));
        }
        fn pulse(s: &TimedSegment) -> &BraggPulse {
            match &s.segment {
                Segment::BraggSplit { pulse, .. } | Segment::Mirror { pulse, .. } => pulse,
                _ => unreachable!(),
            }
        }
        let pulses = [pulse(bragg[0].0), pulse(bragg[1].0), pulse(bragg[2].0)];
        let order = pulses[0].order;
        if pulses.iter().any(|p| p.order != order) {
            return Err(SequenceError::Structure("all Bragg pulses must share one order".into()));
        }
        let times = [bragg[0].0.start, bragg[1].0.start, bragg[2].0.start];
        let t = self.interrogation_time;
        for (a, b) in [(times[0], times[1]), (times[1], times[2])] {
            if ((b - a) - t).abs() > 1e-9 * t {
                return Err(SequenceError::Structure(format!(
                    "pulse separation {} s differs from T = {t} s",
                    b - a
                )));
            }
        }
        let pulses = [pulses[0], pulses[1], pulses[2]];
        Ok(BraggTriple { order, times, pulses })
    }

    pub fn order(&self) -> Result<u32, SequenceError> {
        Ok(self.bragg_triple()?.order)
    }

    /// Lattice segments with their arms.
    pub fn bloch_segments(&self) -> impl Iterator<Item = (f64, Arm, &BlochSegment)> {
        self.segments.iter().filter_map(|s| match &s.segment {
            Segment::BlochAccel { arm, segment } => Some((s.start, *arm, segment)),
            _ => None,
        })
    }

    /// Arm momenta (ħk) and positions (m) in the freely falling frame.
    pub fn trajectories(&self) -> Result<[ArmTrajectory; 2], SequenceError> {
        let triple = self.bragg_triple()?;
        let n = 2.0 * triple.order as f64;
        let [t1, t2, t3] = triple.times;
        let mut knots: [Vec<(f64, f64)>; 2] = [vec![(t1, 0.0), (t1, n)], vec![(t1, 0.0)]];
        let current = |k: &Vec<(f64, f64)>| k.last().unwrap().1;

        let mut mirrored = false;
        let mut events: Vec<&TimedSegment> = self
            .segments
            .iter()
            .filter(|s| matches!(s.segment, Segment::BlochAccel { .. } | Segment::Mirror { .. }))
            .collect();
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        for ev in events {
            match &ev.segment {
                Segment::Mirror { .. } => {
                    let (pa, pb) = (current(&knots[0]), current(&knots[1]));
                    if pa == pb {
                        return Err(SequenceError::Structure("arms share a momentum at the mirror".into()));
                    }
                    let (hi, lo) = if pa > pb { (0, 1) } else { (1, 0) };
                    let (ph, pl) = (current(&knots[hi]), current(&knots[lo]));
                    knots[hi].extend([(t2, ph), (t2, ph - n)]);
                    knots[lo].extend([(t2, pl), (t2, pl + n)]);
                    mirrored = true;
                }
                Segment::BlochAccel { arm, segment } => {
                    let k = &mut knots[arm.index()];
                    let p = current(k);
                    let profile =
                        arm_momentum_profile(segment, p).map_err(SequenceError::Bloch)?;
                    k.extend(profile.retained.iter().map(|&(t, p)| (ev.start + t, p)));
                }
                _ => {}
            }
        }
        if !mirrored {
            return Err(SequenceError::Structure("missing mirror pulse".into()));
        }
        for k in knots.iter_mut() {
            let p = current(k);
            k.push((t3, p));
        }
        let vr = self.recoil_velocity;
        let arms = knots.map(|k| ArmTrajectory::from_momentum(k, vr));
        let dp = (arms[0].final_momentum() - arms[1].final_momentum()).abs() - n;
        let dz = (arms[0].final_position() - arms[1].final_position()).abs();
        if dp.abs() > 1e-9 || !(dz < CLOSURE_TOLERANCE) {
            return Err(SequenceError::NotClosed { momentum: dp, position: dz });
        }
        Ok(arms)
    }

    /// Sum of the light-shift phases on each arm, rad.
    pub fn light_shift_phases(&self) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (_, arm, seg) in self.bloch_segments() {
            out[arm.index()] += seg.light_shift_phase;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKnot {
    /// s
    pub time: f64,
    /// ħk
    pub momentum: f64,
    pub position: f64,
}

/// Piecewise-linear momentum and the exact position it integrates to.
///
/// Two knots at the same time describe an instantaneous kick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTrajectory {
    pub knots: Vec<TrajectoryKnot>,
    /// m/s per ħk
    pub velocity_unit: f64,
}

impl ArmTrajectory {
    fn from_momentum(points: Vec<(f64, f64)>, velocity_unit: f64) -> Self {
        let mut knots = Vec::with_capacity(points.len());
        let mut z = 0.0;
        for (i, &(t, p)) in points.iter().enumerate() {
            if i > 0 {
                let (t0, p0) = points[i - 1];
                z += 0.5 * (p0 + p) * (t - t0) * velocity_unit;
            }
            knots.push(TrajectoryKnot { time: t, momentum: p, position: z });
        }
        Self { knots, velocity_unit }
    }

    pub fn final_momentum(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.momentum)
    }

    pub fn final_position(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.position)
    }

    /// Momentum just after `t`.
    pub fn momentum_at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.time <= t);
        if i == 0 {
            return self.knots[0].momentum;
        }
        if i == self.knots.len() {
            return self.knots[i - 1].momentum;
        }
        let (a, b) = (&self.knots[i - 1], &self.knots[i]);
        a.momentum + (b.momentum - a.momentum) * (t - a.time) / (b.time - a.time)
    }

    pub fn position_at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.time <= t);
        if i == 0 {
            return self.knots[0].position;
        }
        if i == self.knots.len() {
            return self.knots[i - 1].position;
        }
        let (a, b) = (&self.knots[i - 1], &self.knots[i]);
        let s = t - a.time;
        let h = b.time - a.time;
        a.position + self.velocity_unit * (a.momentum * s + 0.5 * (b.momentum - a.momentum) * s * s / h)
    }
}

/// Three-pulse Mach-Zehnder of order `n` with pulses designed for `cloud`.
pub fn build_mach_zehnder(
    order: u32,
    interrogation_time: f64,
    cloud: &SourceCloud,
    constants: &PhysicalConstants,
) -> Result<PulseSequence, SequenceError> {
    if !(interrogation_time.is_finite() && interrogation_time > 0.0) {
        return Err(SequenceError::InvalidInterrogation(interrogation_time));
    }
    let (split, mirror) = design_pulse_pair(order, cloud, constants)?;
    mach_zehnder_from_pulses(split, mirror, interrogation_time, constants)
}

/// Mach-Zehnder from given beamsplitter and mirror pulses.
pub fn mach_zehnder_from_pulses(
    split: BraggPulse,
    mirror: BraggPulse,
    interrogation_time: f64,
    constants: &PhysicalConstants,
) -> Result<PulseSequence, SequenceError> {
    if !(interrogation_time.is_finite() && interrogation_time > 0.0) {
        return Err(SequenceError::InvalidInterrogation(interrogation_time));
    }
    let t = interrogation_time;
    let order = split.order;
    PulseSequence::new(
        vec![
            TimedSegment { start: 0.0, segment: Segment::BraggSplit { order, pulse: split } },
            TimedSegment { start: t, segment: Segment::Mirror { order: mirror.order, pulse: mirror } },
            TimedSegment { start: 2.0 * t, segment: Segment::BraggSplit { order, pulse: split } },
        ],
        t,
        constants,
    )
}

/// `n_eff = (m/(2ħk T²)) ∫ |z₁ − z₂| dt` over the sequence.
pub fn effective_order(seq: &PulseSequence) -> Result<f64, SequenceError> {
    let arms = seq.trajectories()?;
    let t = seq.interrogation_time;
    Ok(separation_area(&arms) / (2.0 * t * t * seq.recoil_velocity))
}

fn separation_area(arms: &[ArmTrajectory; 2]) -> f64 {
    let mut times: Vec<f64> = arms.iter().flat_map(|a| a.knots.iter().map(|k| k.time)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut area = 0.0;
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        // arms are linear in momentum on (a, b): sample just inside
        let mid = 0.5 * (a + b);
        let slope = |arm: &ArmTrajectory| {
            let i = arm.knots.partition_point(|k| k.time <= mid);
            let (k0, k1) = (&arm.knots[i - 1], &arm.knots[i]);
            let s = (k1.momentum - k0.momentum) / (k1.time - k0.time);
            (k0.momentum + s * (a - k0.time), k0.momentum + s * (b - k0.time))
        };
        let (p0a, p0b) = slope(&arms[0]);
        let (p1a, p1b) = slope(&arms[1]);
        let vr = arms[0].velocity_unit;
        let z0 = arms[0].position_at(a) - arms[1].position_at(a);
        area += abs_quadratic_integral(z0, vr * (p0a - p1a), vr * (p0b - p1b), h);
    }
    area
}

/// `∫₀ʰ |z₀ + d₀s + (d₁−d₀)s²/(2h)| ds`
fn abs_quadratic_integral(z0: f64, d0: f64, d1: f64, h: f64) -> f64 {
    let c2 = (d1 - d0) / (2.0 * h);
    let f = |s: f64| z0 * s + 0.5 * d0 * s * s + c2 * s * s * s / 3.0;
    let mut roots = vec![0.0];
    if c2.abs() > 1e-300 {
        let disc = d0 * d0 - 4.0 * c2 * z0;
        if disc >= 0.0 {
            let q = -0.5 * (d0 + d0.signum() * disc.sqrt());
            for r in [q / c2, if q != 0.0 { z0 / q } else { f64::NAN }] {
                if r > 0.0 && r < h {
                    roots.push(r);
                }
            }
        }
    } else if d0 != 0.0 {
        let r = -z0 / d0;
        if r > 0.0 && r < h {
            roots.push(r);
        }
    }
    roots.push(h);
    roots.sort_by(f64::total_cmp);
    roots.windows(2).map(|w| (f(w[1]) - f(w[0])).abs()).sum()
}

/// `Φ = (2kg − 2πα)·n_eff·T²`, rad.
pub fn interferometer_phase(
    seq: &PulseSequence,
    g: f64,
    chirp: f64,
    constants: &PhysicalConstants,
) -> Result<f64, SequenceError> {
    let n_eff = effective_order(seq)?;
    Ok(chirped_phase(constants.wavenumber(), g, chirp, n_eff, seq.interrogation_time))
}

/// `(2kg − 2πα)·n_eff·T²` for a signed wavenumber `k`, rad.
pub fn chirped_phase(wavenumber: f64, g: f64, chirp: f64, n_eff: f64, interrogation_time: f64) -> f64 {
    let t = interrogation_time;
    (2.0 * wavenumber * g - 2.0 * std::f64::consts::PI * chirp) * n_eff * t * t
}

/// Fringe period `1/(n_eff T²)`, Hz/s.
pub fn fringe_period(seq: &PulseSequence) -> Result<f64, SequenceError> {
    let t = seq.interrogation_time;
    Ok(1.0 / (effective_order(seq)? * t * t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::Direction;
    use approx::assert_relative_eq;

    fn pulse(order: u32) -> BraggPulse {
        BraggPulse::gaussian(order, 30e-6, 1e5, &PhysicalConstants::rb87()).unwrap()
    }

    fn mz(order: u32, t: f64) -> PulseSequence {
        mach_zehnder_from_pulses(pulse(order), pulse(order), t, &PhysicalConstants::rb87()).unwrap()
    }

    #[test]
    fn pure_mach_zehnder_order() {
        for (n, t) in [(1, 3e-3), (3, 4e-3), (5, 1e-2)] {
            assert_relative_eq!(effective_order(&mz(n, t)).unwrap(), n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn time_scaling_invariance() {
        let a = effective_order(&mz(2, 2e-3)).unwrap();
        let b = effective_order(&mz(2, 4e-3)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn zero_interrogation_rejected() {
        assert!(matches!(
            mach_zehnder_from_pulses(pulse(1), pulse(1), 0.0, &PhysicalConstants::rb87()),
            Err(SequenceError::InvalidInterrogation(_))
        ));
    }

    #[test]
    fn closes_in_position() {
        let arms = mz(3, 4e-3).trajectories().unwrap();
        assert!((arms[0].final_position() - arms[1].final_position()).abs() < 1e-15);
    }

    #[test]
    fn resonant_chirp_nulls_phase() {
        let c = PhysicalConstants::rb87();
        let seq = mz(1, 3e-3);
        let g = 9.8;
        let alpha = c.wavenumber() * g / std::f64::consts::PI;
        assert!(interferometer_phase(&seq, g, alpha, &c).unwrap().abs() < 1e-6);
        assert_relative_eq!(fringe_period(&seq).unwrap(), 1.0 / 9e-6, max_relative = 1e-12);
    }

    fn lattice(direction: Direction) -> Segment {
        Segment::BlochAccel {
            arm: Arm::Diffracted,
            segment: BlochSegment::new(10.0, 100e-6, 200e-6, 1, direction).unwrap(),
        }
    }

    #[test]
    fn unbalanced_lattice_does_not_close() {
        let seq = mz(2, 2.5e-3);
        assert!(seq.with_segment(0.0, lattice(Direction::Up)).is_err());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let mut segments = mz(2, 2.5e-3).segments;
        segments.insert(1, TimedSegment { start: 0.1e-3, segment: lattice(Direction::Up) });
        segments.insert(2, TimedSegment { start: 0.2e-3, segment: lattice(Direction::Down) });
        let r = PulseSequence::new(segments, 2.5e-3, &PhysicalConstants::rb87());
        assert!(matches!(r, Err(SequenceError::Overlap { .. })));
    }

    fn on(arm: Arm, direction: Direction) -> Segment {
        match lattice(direction) {
            Segment::BlochAccel { segment, .. } => Segment::BlochAccel { arm, segment },
            _ => unreachable!(),
        }
    }

    #[test]
    fn balanced_lattice_closes() {
        let t = 2.5e-3;
        let seq = mz(2, t)
            .segments
            .into_iter()
            .chain([
                TimedSegment { start: 0.0, segment: on(Arm::Diffracted, Direction::Up) },
                TimedSegment { start: 1.05e-3, segment: on(Arm::Diffracted, Direction::Down) },
                TimedSegment { start: t, segment: on(Arm::Undiffracted, Direction::Up) },
                TimedSegment { start: t + 1.05e-3, segment: on(Arm::Undiffracted, Direction::Down) },
            ])
            .collect::<Vec<_>>();
        let mut segments = seq;
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        let seq = PulseSequence::new(segments, t, &PhysicalConstants::rb87()).unwrap();
        let n = effective_order(&seq).unwrap();
        assert!((n - 2.42).abs() < 1e-3, "{n}");
    }

    #[test]
    fn one_sided_lattice_does_not_close() {
        let mut segments = mz(2, 2.5e-3).segments;
        segments.insert(1, TimedSegment { start: 0.0, segment: lattice(Direction::Up) });
        segments.insert(2, TimedSegment { start: 1.05e-3, segment: lattice(Direction::Down) });
        let r = PulseSequence::new(segments, 2.5e-3, &PhysicalConstants::rb87());
        assert!(matches!(r, Err(SequenceError::NotClosed { .. })));
    }

    #[test]
    fn abs_integral_with_sign_change() {
        // z = 1 - s on [0, 2]: two unit triangles
        assert_relative_eq!(abs_quadratic_integral(1.0, -1.0, -1.0, 2.0), 1.0, max_relative = 1e-14);
        // z = s² - 1 on [0, 2]
        let v = abs_quadratic_integral(-1.0, 0.0, 4.0, 2.0);
        assert_relative_eq!(v, 2.0 / 3.0 + 4.0 / 3.0, max_relative = 1e-14);
    }
}
