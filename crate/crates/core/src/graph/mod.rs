//! Coupled-chain factor graph over latent offense/defense strengths.
//!
//! Every team present in a week carries one offense and one defense node. Nodes
//! of consecutive presence weeks are joined by a transition factor; each chain
//! head has a prior factor. A match joins the home offense with the away defense
//! through the home-goal CPT and the away offense with the home defense through
//! the away-goal CPT, with the observed goal count folded in as evidence.

mod bp;
mod objective;
mod ops;

pub use bp::{run_bp, BpConfig};
pub use objective::{bethe_entropy, joint_log_posterior, log_posterior, LogPosterior};
pub use ops::{
    emission_message_to_defense, emission_message_to_offense, match_pair_marginal, node_marginal,
    pairwise_marginal,
};

use crate::model::{Cardinalities, EdgeKind};
use crate::schedule::{Schedule, TeamId};

/// One team's chain; offense and defense chains share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub team: TeamId,
    pub weeks: Vec<usize>,
    pub edges: Vec<EdgeKind>,
    /// Index into `FactorGraph::matches` for each position where the team plays.
    pub match_at: Vec<Option<usize>>,
    /// Flat node index of position 0 within a role.
    pub offset: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }
}

/// A match and the chain positions of its two teams.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchFactor {
    pub week: usize,
    pub home: TeamId,
    pub away: TeamId,
    pub home_pos: usize,
    pub away_pos: usize,
    pub home_goals: usize,
    pub away_goals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub card: Cardinalities,
    pub chains: Vec<Chain>,
    pub matches: Vec<MatchFactor>,
    /// Matches (indices) per week, in schedule order.
    pub matches_by_week: Vec<Vec<usize>>,
    /// (team, position) of every chain node per week.
    pub nodes_by_week: Vec<Vec<(usize, usize)>>,
    num_nodes_per_role: usize,
}

/// Builds the graph from a validated schedule. Goals above the cap of `card`
/// are clamped to it.
pub fn build_graph(schedule: &Schedule, card: Cardinalities) -> FactorGraph {
    let cap = card.goal_cap();
    let mut chains = Vec::with_capacity(schedule.num_teams());
    let mut offset = 0;
    for t in 0..schedule.num_teams() {
        let team = TeamId(t);
        let weeks = schedule.presence(team).to_vec();
        let n = weeks.len();
        chains.push(Chain {
            team,
            edges: schedule.chain_edges(team),
            match_at: vec![None; n],
            weeks,
            offset,
        });
        offset += n;
    }
    let mut matches = Vec::with_capacity(schedule.num_matches());
    let mut matches_by_week = vec![Vec::new(); schedule.num_weeks()];
    for (w, m) in schedule.matches() {
        let pos_of = |team: TeamId| {
            chains[team.0]
                .weeks
                .binary_search(&w)
                .expect("validated schedule: players are present")
        };
        let (home_pos, away_pos) = (pos_of(m.home), pos_of(m.away));
        let idx = matches.len();
        chains[m.home.0].match_at[home_pos] = Some(idx);
        chains[m.away.0].match_at[away_pos] = Some(idx);
        matches_by_week[w].push(idx);
        matches.push(MatchFactor {
            week: w,
            home: m.home,
            away: m.away,
            home_pos,
            away_pos,
            home_goals: m.home_goals.min(cap),
            away_goals: m.away_goals.min(cap),
        });
    }
    let mut nodes_by_week = vec![Vec::new(); schedule.num_weeks()];
    for (t, c) in chains.iter().enumerate() {
        for (p, &w) in c.weeks.iter().enumerate() {
            nodes_by_week[w].push((t, p));
        }
    }
    FactorGraph {
        card,
        chains,
        matches,
        matches_by_week,
        nodes_by_week,
        num_nodes_per_role: offset,
    }
}

impl FactorGraph {
    pub fn num_weeks(&self) -> usize {
        self.nodes_by_week.len()
    }

    pub fn num_latent_nodes(&self) -> usize {
        2 * self.num_nodes_per_role
    }

    pub(crate) fn nodes_per_role(&self) -> usize {
        self.num_nodes_per_role
    }

    /// Latent nodes plus the two observed goal nodes of every match.
    pub fn num_variable_nodes(&self) -> usize {
        self.num_latent_nodes() + 2 * self.matches.len()
    }

    pub fn num_transition_factors(&self) -> usize {
        2 * self.chains.iter().map(|c| c.edges.len()).sum::<usize>()
    }

    pub fn num_prior_factors(&self) -> usize {
        2 * self.chains.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn num_emission_factors(&self) -> usize {
        2 * self.matches.len()
    }

    /// True when the latent graph has no cycles, so BP is exact.
    pub fn is_forest(&self) -> bool {
        let n = self.num_latent_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut union = |a: usize, b: usize| {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
            true
        };
        let off = self.num_nodes_per_role;
        for c in &self.chains {
            for p in 1..c.len() {
                // chains are paths, these never close a cycle on their own
                union(c.offset + p - 1, c.offset + p);
                union(off + c.offset + p - 1, off + c.offset + p);
            }
        }
        for m in &self.matches {
            let (h, a) = (&self.chains[m.home.0], &self.chains[m.away.0]);
            if !union(h.offset + m.home_pos, off + a.offset + m.away_pos) {
                return false;
            }
            if !union(a.offset + m.away_pos, off + h.offset + m.home_pos) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{MatchRecord, Week};
    use chrono::NaiveDate;

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(n)
    }

    pub(crate) fn round_robin() -> Schedule {
        let m = |d: i64, h: usize, a: usize| {
            MatchRecord::new(day(d), TeamId(h), TeamId(a), 1, 0, 4).unwrap()
        };
        let weeks = vec![
            Week {
                start: day(0),
                end: day(0),
                season: 0,
                matches: vec![m(0, 0, 1)],
            },
            Week {
                start: day(7),
                end: day(7),
                season: 0,
                matches: vec![m(7, 0, 2)],
            },
            Week {
                start: day(14),
                end: day(14),
                season: 0,
                matches: vec![m(14, 1, 2)],
            },
        ];
        Schedule::new(weeks, 3).unwrap()
    }

    #[test]
    fn round_robin_counts() {
        let g = build_graph(&round_robin(), Cardinalities::default());
        assert_eq!(g.num_latent_nodes(), 18);
        assert_eq!(g.num_variable_nodes(), 2 * 3 * 3 + 2 * 3);
        assert_eq!(g.num_transition_factors(), 12);
        assert_eq!(g.num_prior_factors(), 6);
        assert_eq!(g.num_emission_factors(), 6);
        assert!(!g.is_forest());
    }

    #[test]
    fn single_match_counts() {
        let m = MatchRecord::new(day(0), TeamId(0), TeamId(1), 2, 2, 4).unwrap();
        let s = Schedule::new(
            vec![Week {
                start: day(0),
                end: day(0),
                season: 0,
                matches: vec![m],
            }],
            2,
        )
        .unwrap();
        let g = build_graph(&s, Cardinalities::default());
        assert_eq!(g.num_latent_nodes(), 4);
        assert_eq!(g.num_transition_factors(), 0);
        assert_eq!(g.num_prior_factors(), 4);
        assert_eq!(g.num_emission_factors(), 2);
        assert!(g.is_forest());
    }

    #[test]
    fn lone_team_chain_counts() {
        let weeks = (0..5)
            .map(|i| Week {
                start: day(7 * i),
                end: day(7 * i),
                season: 0,
                matches: vec![],
            })
            .collect();
        let s = Schedule::new(weeks, 1)
            .unwrap()
            .with_presence(vec![vec![0, 1, 2, 3, 4]])
            .unwrap();
        let g = build_graph(&s, Cardinalities::default());
        assert_eq!(g.num_latent_nodes(), 10);
        assert_eq!(g.num_transition_factors(), 8);
        assert_eq!(g.num_emission_factors(), 0);
        assert!(g.is_forest());
    }

    #[test]
    fn repeat_meeting_is_a_cycle() {
        let m = |d: i64, h: usize, a: usize| {
            MatchRecord::new(day(d), TeamId(h), TeamId(a), 0, 0, 4).unwrap()
        };
        let weeks = vec![
            Week {
                start: day(0),
                end: day(0),
                season: 0,
                matches: vec![m(0, 0, 1)],
            },
            Week {
                start: day(7),
                end: day(7),
                season: 0,
                matches: vec![m(7, 1, 0)],
            },
        ];
        let g = build_graph(&Schedule::new(weeks, 2).unwrap(), Cardinalities::default());
        assert!(!g.is_forest());
    }
}
