//! E-step sufficient statistics: node, consecutive-week and match marginals.

use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{EdgeKind, Role};
use crate::schedule::{TeamId, TeamRegistry};

/// Marginals along one team's chain. Offense and defense chains share weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior {
    pub team: TeamId,
    pub weeks: Vec<usize>,
    pub edge_kinds: Vec<EdgeKind>,
    /// Whether the team plays at each chain position.
    pub plays: Vec<bool>,
    pub offense: Vec<Array1<f64>>,
    pub defense: Vec<Array1<f64>>,
    /// `xi[e][i][k]`: joint of state `i` at position `e` and `k` at `e + 1`.
    pub xi_offense: Vec<Array2<f64>>,
    pub xi_defense: Vec<Array2<f64>>,
}

impl ChainPosterior {
    pub fn gamma(&self, role: Role) -> &[Array1<f64>] {
        match role {
            Role::Offense => &self.offense,
            Role::Defense => &self.defense,
        }
    }

    pub fn xi(&self, role: Role) -> &[Array2<f64>] {
        match role {
            Role::Offense => &self.xi_offense,
            Role::Defense => &self.xi_defense,
        }
    }

    pub fn position(&self, week: usize) -> Option<usize> {
        self.weeks.binary_search(&week).ok()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }
}

/// Match marginals; `zeta_home` is over (home offense, away defense) and
/// `zeta_away` over (away offense, home defense).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPosterior {
    pub week: usize,
    pub home: TeamId,
    pub away: TeamId,
    pub home_goals: usize,
    pub away_goals: usize,
    pub zeta_home: Array2<f64>,
    pub zeta_away: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub num_states: usize,
    /// Indexed by team id; teams without presence have empty chains.
    pub chains: Vec<ChainPosterior>,
    pub matches: Vec<MatchPosterior>,
}

impl Posterior {
    pub fn chain(&self, team: TeamId) -> Result<&ChainPosterior> {
        self.chains
            .get(team.0)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::UnknownTeam(format!("team {team} has no posterior")))
    }

    pub fn gamma(&self, team: TeamId, role: Role, week: usize) -> Option<&Array1<f64>> {
        let chain = self.chains.get(team.0)?;
        chain.position(week).map(|p| &chain.gamma(role)[p])
    }

    /// Latest chain position strictly before `week`.
    pub fn last_before(&self, team: TeamId, week: usize) -> Option<(usize, usize)> {
        let chain = self.chains.get(team.0)?;
        let idx = chain.weeks.partition_point(|&w| w < week);
        idx.checked_sub(1).map(|p| (p, chain.weeks[p]))
    }

    /// Non-negativity and unit-sum violations beyond `tol`.
    pub fn normalization_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |label: String, xs: &mut dyn Iterator<Item = f64>| {
            let mut sum = 0.0;
            let mut neg = false;
            for x in xs {
                neg |= x < 0.0 || !x.is_finite();
                sum += x;
            }
            if neg || (sum - 1.0).abs() > tol {
                out.push(format!("{label} sums to {sum}"));
            }
        };
        for c in &self.chains {
            for role in [Role::Offense, Role::Defense] {
                for (p, g) in c.gamma(role).iter().enumerate() {
                    check(
                        format!("team {} {role} gamma at week {}", c.team, c.weeks[p]),
                        &mut g.iter().copied(),
                    );
                }
                for (e, x) in c.xi(role).iter().enumerate() {
                    check(
                        format!("team {} {role} xi at edge {e}", c.team),
                        &mut x.iter().copied(),
                    );
                }
            }
        }
        for (m, mp) in self.matches.iter().enumerate() {
            check(
                format!("match {m} zeta_home"),
                &mut mp.zeta_home.iter().copied(),
            );
            check(
                format!("match {m} zeta_away"),
                &mut mp.zeta_away.iter().copied(),
            );
        }
        out
    }

    /// CSV with columns `team, week, kind, s0..s{S-1}` in (team, week, kind) order.
    pub fn write_csv(&self, teams: Option<&TeamRegistry>, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["team".to_string(), "week".into(), "kind".into()];
        header.extend((0..self.num_states).map(|s| format!("s{s}")));
        w.write_record(&header)?;
        for c in &self.chains {
            let team = teams
                .and_then(|t| t.name(c.team))
                .map_or_else(|| c.team.to_string(), str::to_string);
            for (p, week) in c.weeks.iter().enumerate() {
                for role in [Role::Defense, Role::Offense] {
                    let mut row = vec![team.clone(), week.to_string(), role.to_string()];
                    row.extend(c.gamma(role)[p].iter().map(|x| x.to_string()));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
