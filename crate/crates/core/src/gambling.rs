//! Horse-race portfolio math: doubling rates with and without reservation,
//! optimal strategies, and the exhaustive-grid oracle used to check them.
//!
//! All rates are in nats. A bet that puts nothing on a horse that can win
//! has rate `f64::NEG_INFINITY`; that value is returned, never raised.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Probability vector: non-negative entries summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("simplex needs at least one entry"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("simplex entry {w} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("simplex entries sum to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("cannot normalize weights with non-positive total"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(s: Simplex) -> Self {
        s.0
    }
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Winning probabilities and per-horse odds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaceSpec {
    p: Simplex,
    odds: Vec<f64>,
}

impl RaceSpec {
    pub fn new(p: Simplex, odds: Vec<f64>) -> Result<Self> {
        if odds.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: odds.len(),
            });
        }
        if let Some(o) = odds.iter().find(|o| !(**o > 0.0) || !o.is_finite()) {
            return Err(Error::invalid(format!("odds must be positive, got {o}")));
        }
        Ok(Self { p, odds })
    }

    pub fn uniform_odds(p: Simplex, o: f64) -> Result<Self> {
        let m = p.len();
        Self::new(p, vec![o; m])
    }

    pub fn p(&self) -> &Simplex {
        &self.p
    }

    pub fn odds(&self) -> &[f64] {
        &self.odds
    }

    pub fn horses(&self) -> usize {
        self.p.len()
    }

    /// The common odds value, if every horse pays the same.
    pub fn uniform_payoff(&self) -> Option<f64> {
        let first = self.odds[0];
        self.odds.iter().all(|&o| o == first).then_some(first)
    }
}

/// Bet over `m` horses plus a final reservation entry that pays 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservationBet(Simplex);

impl ReservationBet {
    pub fn new(b: Simplex) -> Result<Self> {
        if b.len() < 2 {
            return Err(Error::invalid(
                "a reservation bet needs at least one horse plus reservation",
            ));
        }
        Ok(Self(b))
    }

    pub fn full_reservation(m: usize) -> Self {
        let mut w = vec![0.0; m + 1];
        w[m] = 1.0;
        Self(Simplex(w))
    }

    pub fn simplex(&self) -> &Simplex {
        &self.0
    }

    pub fn horses(&self) -> usize {
        self.0.len() - 1
    }

    /// Stakes on the horses, excluding reservation.
    pub fn stakes(&self) -> &[f64] {
        &self.0.as_slice()[..self.horses()]
    }

    pub fn reservation(&self) -> f64 {
        self.0.as_slice()[self.horses()]
    }

    /// Wealth relative when `winner` wins at uniform odds `o`.
    pub fn wealth_relative(&self, winner: usize, o: f64) -> f64 {
        self.stakes()[winner] * o + self.reservation()
    }
}

/// Joint table `p(x, y)`: rows index side information, columns index outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    rows: usize,
    cols: usize,
    table: Vec<f64>,
}

impl JointDistribution {
    pub fn new(rows: usize, cols: usize, table: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("joint distribution needs positive dimensions"));
        }
        if table.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: table.len(),
            });
        }
        Simplex::new(table.clone())?;
        Ok(Self { rows, cols, table })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged joint table"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.cols + y]
    }

    pub fn side_values(&self) -> usize {
        self.rows
    }

    pub fn outcomes(&self) -> usize {
        self.cols
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.table.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.table.chunks_exact(self.cols) {
            for (acc, v) in out.iter_mut().zip(row) {
                *acc += v;
            }
        }
        out
    }
}

/// `Σ pᵢ ln(bᵢ oᵢ)`; terms with `pᵢ = 0` contribute nothing.
pub fn doubling_rate(b: &Simplex, race: &RaceSpec) -> Result<f64> {
    if b.len() != race.horses() {
        return Err(Error::DimensionMismatch {
            expected: race.horses(),
            got: b.len(),
        });
    }
    Ok(rate_terms(race.p.as_slice(), |i| b.0[i] * race.odds[i]))
}

fn rate_terms(p: &[f64], wealth: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            let w = wealth(i);
            if w <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += pi * w.ln();
        }
    }
    total
}

/// `Σ pᵢ ln(o·bᵢ + b_{m+1})` for a race with uniform odds.
pub fn doubling_rate_with_reservation(b: &ReservationBet, race: &RaceSpec) -> Result<f64> {
    if b.horses() != race.horses() {
        return Err(Error::DimensionMismatch {
            expected: race.horses(),
            got: b.horses(),
        });
    }
    let o = race
        .uniform_payoff()
        .ok_or_else(|| Error::invalid("reservation rate is defined for uniform odds only"))?;
    Ok(reservation_rate(race.p.as_slice(), b.stakes(), b.reservation(), o))
}

fn reservation_rate(p: &[f64], stakes: &[f64], reserve: f64, o: f64) -> f64 {
    rate_terms(p, |i| o * stakes[i] + reserve)
}

/// Proportional betting `b* = p` and its rate `Σ pᵢ ln oᵢ − H(p)`.
pub fn optimal_bet(race: &RaceSpec) -> (Simplex, f64) {
    let p = race.p.as_slice();
    let expected_log_odds: f64 = p.iter().zip(&race.odds).map(|(pi, oi)| pi * oi.ln()).sum();
    (race.p.clone(), expected_log_odds - race.p.entropy())
}

/// Maximizer of `Σ pᵢ ln(o·bᵢ + b_{m+1})` over the `(m+1)`-simplex.
///
/// With `qᵢ = o·bᵢ + r` the KKT conditions give a threshold structure: the
/// horses actually bet on are the `k` most likely ones, each receiving
/// `bᵢ = pᵢ − r/o`, and stationarity in `r` fixes the reservation at
/// `r = P_rest / (1 − k/o)` where `P_rest` is the mass of the horses left
/// out. A candidate `k` is consistent when every chosen horse keeps a
/// positive stake and every excluded one satisfies `pᵢ ≤ r/o`.
pub fn optimal_reservation_bet(p: &Simplex, o: f64) -> Result<(ReservationBet, f64)> {
    if !(o > 0.0) || !o.is_finite() {
        return Err(Error::invalid(format!("payoff must be positive, got {o}")));
    }
    let probs = p.as_slice();
    let m = probs.len();
    if o <= 1.0 {
        return Ok((ReservationBet::full_reservation(m), 0.0));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let positive = probs.iter().filter(|&&x| x > 0.0).count();

    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 0..=positive {
        let rest_mass: f64 = order[k..].iter().map(|&i| probs[i]).sum();
        let reserve = if k == positive {
            // every winning horse is bet on: r = 0 needs k/o <= 1
            if k as f64 > o {
                continue;
            }
            0.0
        } else {
            if k as f64 >= o {
                continue;
            }
            rest_mass / (1.0 - k as f64 / o)
        };
        let cut = reserve / o;
        let chosen_ok = order[..k].iter().all(|&i| probs[i] - cut > 0.0);
        let excluded_ok = order[k..].iter().all(|&i| probs[i] <= cut * (1.0 + 1e-12));
        if !(chosen_ok && excluded_ok) {
            continue;
        }
        let mut w = vec![0.0; m + 1];
        for &i in &order[..k] {
            w[i] = probs[i] - cut;
        }
        w[m] = reserve;
        // Tidy rounding so the result is a valid simplex.
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let rate = reservation_rate(probs, &w[..m], w[m], o);
        if best.as_ref().is_none_or(|(_, r)| rate > *r) {
            best = Some((w, rate));
        }
    }

    let (w, rate) = best.ok_or_else(|| Error::invalid("no consistent active set (unreachable for valid input)"))?;
    Ok((ReservationBet(Simplex::new(w)?), rate))
}

/// Both sides of the side-information identity, computed independently.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideInformationGain {
    /// `W*(Y|X) − W*(Y)` via conditional proportional betting.
    pub rate_gain: f64,
    /// `Σ p(x,y) ln(p(x,y) / (p(x) p(y)))`.
    pub mutual_information: f64,
}

/// Increase in optimal doubling rate from observing `X` before betting on `Y`.
///
/// `odds` holds one entry per outcome of `Y`. Returns an error if the two
/// routes disagree by more than `1e-9`.
pub fn side_information_gain(joint: &JointDistribution, odds: &[f64]) -> Result<SideInformationGain> {
    if odds.len() != joint.outcomes() {
        return Err(Error::DimensionMismatch {
            expected: joint.outcomes(),
            got: odds.len(),
        });
    }
    let py = joint.marginal_y();
    let px = joint.marginal_x();

    let unconditional = RaceSpec::new(Simplex::normalized(py.clone())?, odds.to_vec())?;
    let (_, w_y) = optimal_bet(&unconditional);

    let mut w_y_given_x = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        if pxv <= 0.0 {
            continue;
        }
        let cond: Vec<f64> = (0..joint.outcomes()).map(|y| joint.get(x, y) / pxv).collect();
        let race = RaceSpec::new(Simplex::normalized(cond)?, odds.to_vec())?;
        let (_, w) = optimal_bet(&race);
        w_y_given_x += pxv * w;
    }
    let rate_gain = w_y_given_x - w_y;

    let mut mutual_information = 0.0;
    for (x, &pxv) in px.iter().enumerate() {
        for (y, &pyv) in py.iter().enumerate() {
            let pxy = joint.get(x, y);
            if pxy > 0.0 {
                mutual_information += pxy * (pxy / (pxv * pyv)).ln();
            }
        }
    }

    if (rate_gain - mutual_information).abs() > 1e-9 {
        return Err(Error::IdentityViolated {
            gain: rate_gain,
            mutual_information,
        });
    }
    Ok(SideInformationGain {
        rate_gain,
        mutual_information,
    })
}

/// Best grid point found by [`brute_force_max`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// `m` entries, or `m+1` with the reservation last.
    pub bet: Vec<f64>,
    pub rate: f64,
}

/// Exhaustive search over the simplex grid with spacing `resolution`.
///
/// Without reservation the grid spans the `m`-simplex and the race may
/// carry per-horse odds; with reservation it spans the `(m+1)`-simplex
/// and uses the first odds entry as the uniform payoff.
pub fn brute_force_max(p: &Simplex, odds: &[f64], resolution: f64, with_reservation: bool) -> Result<GridOptimum> {
    let m = p.len();
    if m > 4 {
        return Err(Error::GridTooLarge { m });
    }
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::invalid(format!("resolution {resolution} outside (0, 0.1]")));
    }
    if odds.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: odds.len(),
        });
    }
    let steps = (1.0 / resolution).round() as usize;
    let dims = if with_reservation { m + 1 } else { m };
    let probs = p.as_slice();
    let o = odds[0];

    let mut counts = vec![0usize; dims];
    let mut bet = vec![0.0; dims];
    let mut best = GridOptimum {
        bet: Vec::new(),
        rate: f64::NEG_INFINITY,
    };
    let mut visit = |counts: &[usize]| {
        for (b, &c) in bet.iter_mut().zip(counts) {
            *b = c as f64 / steps as f64;
        }
        let rate = if with_reservation {
            reservation_rate(probs, &bet[..m], bet[m], o)
        } else {
            rate_terms(probs, |i| bet[i] * odds[i])
        };
        if best.bet.is_empty() || rate > best.rate {
            best = GridOptimum { bet: bet.clone(), rate };
        }
    };
    enumerate_compositions(&mut counts, 0, steps, &mut visit);
    Ok(best)
}

/// Calls `visit` with every way of writing `remaining` as an ordered sum of
/// `counts.len() - pos` non-negative integers.
fn enumerate_compositions(counts: &mut [usize], pos: usize, remaining: usize, visit: &mut impl FnMut(&[usize])) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        enumerate_compositions(counts, pos + 1, remaining - c, visit);
    }
}

/// `∏ (b_j o + b_{m+1})` over a sequence of races; `1` for no races.
pub fn wealth_relative(bets: &[ReservationBet], winners: &[usize], o: f64) -> Result<f64> {
    if bets.len() != winners.len() {
        return Err(Error::DimensionMismatch {
            expected: bets.len(),
            got: winners.len(),
        });
    }
    let mut wealth = 1.0;
    for (b, &w) in bets.iter().zip(winners) {
        if w >= b.horses() {
            return Err(Error::invalid(format!("winner {w} outside [0, {})", b.horses())));
        }
        wealth *= b.wealth_relative(w, o);
    }
    Ok(wealth)
}
