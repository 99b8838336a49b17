use dg_core::gambling::{
    brute_force_max, doubling_rate, doubling_rate_with_reservation, optimal_bet, optimal_reservation_bet,
    side_information_gain, wealth_relative, JointDistribution, RaceSpec, ReservationBet, Simplex,
};
use serde_json::{json, Value};

use crate::args::MathCommand;
use crate::error::{CliError, CliResult};

fn parse_rows(text: &str) -> CliResult<Vec<Vec<f64>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::config(format!("bad number `{v}`: {e}")))
                })
                .collect()
        })
        .collect()
}

/// `f64::NEG_INFINITY` has no JSON literal; it is written as the string "-inf".
fn rate(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

pub fn run(cmd: &MathCommand) -> CliResult<Value> {
    Ok(match cmd {
        MathCommand::DoublingRate { p, odds, bet } => {
            let p = Simplex::new(p.clone())?;
            let race = RaceSpec::new(p.clone(), odds.clone())?;
            let w = if bet.len() == p.len() + 1 {
                doubling_rate_with_reservation(&ReservationBet::new(Simplex::new(bet.clone())?)?, &race)?
            } else {
                doubling_rate(&Simplex::new(bet.clone())?, &race)?
            };
            json!({ "rate": rate(w) })
        }
        MathCommand::OptimalBet { p, odds } => {
            let (b, w) = optimal_bet(&RaceSpec::new(Simplex::new(p.clone())?, odds.clone())?);
            json!({ "bet": b.as_slice(), "rate": rate(w) })
        }
        MathCommand::OptimalReservation { p, payoff } => {
            let (b, w) = optimal_reservation_bet(&Simplex::new(p.clone())?, *payoff)?;
            json!({ "stakes": b.stakes(), "reservation": b.reservation(), "rate": rate(w) })
        }
        MathCommand::SideInfo { joint, odds } => {
            let joint = JointDistribution::from_rows(&parse_rows(joint)?)?;
            let gain = side_information_gain(&joint, odds)?;
            json!({ "rate_gain": gain.rate_gain, "mutual_information": gain.mutual_information })
        }
        MathCommand::BruteForce {
            p,
            odds,
            resolution,
            reservation,
        } => {
            let best = brute_force_max(&Simplex::new(p.clone())?, odds, *resolution, *reservation)?;
            json!({ "bet": best.bet, "rate": rate(best.rate) })
        }
        MathCommand::Wealth { bets, winners, payoff } => {
            let bets = parse_rows(bets)?
                .into_iter()
                .map(|b| Ok(ReservationBet::new(Simplex::new(b)?)?))
                .collect::<CliResult<Vec<_>>>()?;
            json!({ "wealth_relative": wealth_relative(&bets, winners, *payoff)? })
        }
    })
}
