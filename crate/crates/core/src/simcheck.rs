//! Independent discrete-event simulation oracles. Both simulators run in
//! continuous time (the swap oracle deliberately does NOT reuse the
//! embedded-chain construction), so agreement with the analytic queue
//! models is a genuine cross-check rather than a self-comparison.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::model::{ChargeStationSpec, SwapStationSpec};
use crate::{Error, Result};

/// Result of one simulation run.
#[derive(Debug, Clone, Copy)]
pub struct SimEstimate {
    pub mean_wait: f64,
    /// Approximate 95% confidence half-width via batch means.
    pub ci_halfwidth: f64,
    /// Fraction of arrivals turned away (swap oracle only; 0 for M/M/V).
    pub block_rate: f64,
}

const BATCHES: usize = 20;

fn batch_stats(waits: &[f64]) -> (f64, f64) {
    let n = waits.len();
    let mean = waits.iter().sum::<f64>() / n as f64;
    let batch = n / BATCHES;
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| waits[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (mean, 1.96 * (var / BATCHES as f64).sqrt())
}

/// Event-driven M/M/V simulation of one charging station. FIFO with the
/// earliest-free-charger rule, which is exact for this discipline.
pub fn des_mmv(
    arrival: f64,
    spec: &ChargeStationSpec,
    n_arrivals: usize,
    seed: u64,
) -> Result<SimEstimate> {
    if arrival <= 0.0 {
        return Err(Error::Domain("arrival rate must be > 0".into()));
    }
    let rho = arrival * spec.mean_charge_hours / spec.chargers as f64;
    if rho >= 1.0 {
        return Err(Error::UnstableQueue { rho });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interarrival = Exp::new(arrival).expect("positive rate");
    let service = Exp::new(1.0 / spec.mean_charge_hours).expect("positive rate");
    let mut free_at = vec![0.0f64; spec.chargers];
    let mut clock = 0.0;
    let warmup = (n_arrivals / 20).max(1_000).min(n_arrivals / 2);
    let mut waits = Vec::with_capacity(n_arrivals - warmup);
    for event in 0..n_arrivals {
        clock += interarrival.sample(&mut rng);
        let (slot, &earliest) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let start = clock.max(earliest);
        free_at[slot] = start + service.sample(&mut rng);
        if event >= warmup {
            waits.push(start - clock);
        }
    }
    let (mean_wait, ci_halfwidth) = batch_stats(&waits);
    Ok(SimEstimate { mean_wait, ci_halfwidth, block_rate: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum SwapEvent {
    Arrival,
    SlotDone,
    ChargeDone,
}

/// Continuous-time simulation of one battery-swapping station: Poisson EV
/// arrivals, S bays with constant swap duration, B circulating batteries,
/// at most C charging simultaneously with exponential recharge times, and
/// capacity-W balking at arrival instants.
///
/// The bays model an automated swap machine that runs fixed-duration slots
/// while a backlog exists: slots tick every tau_s from the start of a busy
/// period, and a battery that finishes charging mid-slot is picked up at
/// the next slot boundary. The machine clock stops when no EVs are present,
/// so an arrival at an idle station starts immediately. A departing EV
/// leaves its depleted battery behind at the end of its slot.
pub fn des_swap(
    arrival: f64,
    spec: &SwapStationSpec,
    battery_charge_hours: f64,
    n_arrivals: usize,
    seed: u64,
) -> Result<SimEstimate> {
    if arrival <= 0.0 {
        return Err(Error::Domain("arrival rate must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interarrival = Exp::new(arrival).expect("positive rate");
    let recharge = Exp::new(1.0 / battery_charge_hours).expect("positive rate");

    // Future events as a sorted list of (time, kind); the handful of
    // concurrent events keeps a Vec cheaper than a heap here.
    let mut events: Vec<(f64, SwapEvent)> = Vec::new();
    let push = |events: &mut Vec<(f64, SwapEvent)>, t: f64, e: SwapEvent| {
        let idx = events.partition_point(|(time, _)| *time > t);
        events.insert(idx, (t, e));
    };

    let mut clock;
    push(&mut events, interarrival.sample(&mut rng), SwapEvent::Arrival);

    let mut queue: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut evs_present = 0usize;
    let mut full_batteries = spec.batteries;
    let mut depleted_pool = 0usize;
    let mut in_service = 0usize;
    let mut chargers_busy = 0usize;
    // Set while the machine clock is running (some EV is present).
    let mut slot_open = false;

    let warmup = (n_arrivals / 20).max(1_000).min(n_arrivals / 2);
    let mut seen = 0usize;
    let mut blocked = 0usize;
    let mut waits: Vec<f64> = Vec::new();

    while seen < n_arrivals {
        let (t, event) = events.pop().expect("event queue never empties");
        clock = t;
        match event {
            SwapEvent::Arrival => {
                seen += 1;
                if evs_present >= spec.queue_capacity {
                    if seen > warmup {
                        blocked += 1;
                    }
                } else {
                    evs_present += 1;
                    queue.push_back(clock);
                    if !slot_open {
                        // Idle machine: a fresh busy period starts now.
                        slot_open = true;
                        start_slot(
                            clock,
                            spec,
                            &mut queue,
                            &mut full_batteries,
                            &mut in_service,
                            &mut waits,
                            seen > warmup,
                        );
                        push(&mut events, clock + spec.swap_hours, SwapEvent::SlotDone);
                    }
                }
                if seen < n_arrivals {
                    push(&mut events, clock + interarrival.sample(&mut rng), SwapEvent::Arrival);
                }
            }
            SwapEvent::SlotDone => {
                // EVs served this slot depart and drop depleted batteries.
                evs_present -= in_service;
                for _ in 0..in_service {
                    if chargers_busy < spec.chargers {
                        chargers_busy += 1;
                        push(&mut events, clock + recharge.sample(&mut rng), SwapEvent::ChargeDone);
                    } else {
                        depleted_pool += 1;
                    }
                }
                in_service = 0;
                if evs_present > 0 {
                    start_slot(
                        clock,
                        spec,
                        &mut queue,
                        &mut full_batteries,
                        &mut in_service,
                        &mut waits,
                        seen > warmup,
                    );
                    push(&mut events, clock + spec.swap_hours, SwapEvent::SlotDone);
                } else {
                    slot_open = false;
                }
            }
            SwapEvent::ChargeDone => {
                chargers_busy -= 1;
                full_batteries += 1;
                if depleted_pool > 0 {
                    depleted_pool -= 1;
                    chargers_busy += 1;
                    push(&mut events, clock + recharge.sample(&mut rng), SwapEvent::ChargeDone);
                }
            }
        }
    }
    if waits.len() < BATCHES {
        return Err(Error::Domain("too few admitted EVs to estimate the wait".into()));
    }
    let (mean_wait, ci_halfwidth) = batch_stats(&waits);
    let observed = (n_arrivals - warmup) as f64;
    Ok(SimEstimate { mean_wait, ci_halfwidth, block_rate: blocked as f64 / observed })
}

#[allow(clippy::too_many_arguments)]
fn start_slot(
    clock: f64,
    spec: &SwapStationSpec,
    queue: &mut std::collections::VecDeque<f64>,
    full_batteries: &mut usize,
    in_service: &mut usize,
    waits: &mut Vec<f64>,
    record: bool,
) {
    // Slots run even when no battery is available; the waiting EVs simply
    // are not served until a later slot.
    let served = queue.len().min(*full_batteries).min(spec.bays);
    for _ in 0..served {
        let arrived = queue.pop_front().unwrap();
        *full_batteries -= 1;
        if record {
            waits.push(clock - arrived);
        }
    }
    *in_service += served;
}
