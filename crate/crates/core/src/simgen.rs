//! Deterministic synthetic transaction generator.
//!
//! Legitimate traffic comes from a fixed population of users. Each user has
//! an activity weight, a typical amount and one to three home terminals.
//! The legitimate row budget is split across users by largest remainder, and
//! given its count each user's arrival times are drawn independently from a
//! day/night intensity profile (an inhomogeneous Poisson process conditioned
//! on its count).
//!
//! Fraud rows are injected in exact number and belong to one of five
//! scenarios, each built so that its signal sits in the temporal attributes:
//!
//! * `burst`: 5 to 8 frauds by one user within two hours, preceded by four
//!   legitimate lead-in transactions 2 to 40 hours earlier, so every burst
//!   fraud sees at least five of its user's transactions in the prior 48 hours.
//! * `night_owl`: 2 or 3 withdrawals inside one hour between 01:00 and 06:00.
//! * `new_account_abuse`: a user who did not exist before makes 3 to 6
//!   transactions within six hours of their first one.
//! * `terminal_compromise`: 6 to 10 different users hit one terminal within
//!   three hours.
//! * `amount_spike`: a single transfer of 8 to 15 times the user's typical amount.
//!
//! Burst and new-account frauds keep ordinary amounts and types, so only the
//! temporal attributes separate them from legitimate traffic.
//!
//! Random streams: every stream is ChaCha8 seeded with the config seed, and
//! the stream number selects the purpose. Stream 0 draws user profiles, streams
//! 1 to 5 drive the scenarios in declaration order, and stream `1000 + u`
//! generates user `u`'s legitimate rows. Users are therefore independent of
//! one another and of generation order.

use crate::domain::{Dataset, Label, Transaction, TxType};
use crate::enrich::{DAY, HOUR};
use crate::error::{invalid, Error, Result};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Burst,
    NightOwl,
    NewAccountAbuse,
    TerminalCompromise,
    AmountSpike,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Burst,
        Scenario::NightOwl,
        Scenario::NewAccountAbuse,
        Scenario::TerminalCompromise,
        Scenario::AmountSpike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Burst => "burst",
            Scenario::NightOwl => "night_owl",
            Scenario::NewAccountAbuse => "new_account_abuse",
            Scenario::TerminalCompromise => "terminal_compromise",
            Scenario::AmountSpike => "amount_spike",
        }
    }

    fn stream(self) -> u64 {
        1 + Scenario::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

/// 2023-01-01T00:00:00Z and 2023-07-01T00:00:00Z.
pub const DEFAULT_PERIOD: (i64, i64) = (1_672_531_200, 1_688_169_600);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_users: usize,
    pub n_terminals: usize,
    /// `[start, end)` in epoch seconds.
    pub period: (i64, i64),
    pub target_rows: usize,
    pub fraud_rate: f64,
    pub scenario_mix: BTreeMap<Scenario, f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_users: 2_000,
            n_terminals: 400,
            period: DEFAULT_PERIOD,
            target_rows: 50_000,
            fraud_rate: 0.005,
            scenario_mix: uniform_mix(&Scenario::ALL),
            seed: 42,
        }
    }
}

/// Equal weight on each listed scenario.
pub fn uniform_mix(scenarios: &[Scenario]) -> BTreeMap<Scenario, f64> {
    scenarios.iter().map(|&s| (s, 1.0 / scenarios.len() as f64)).collect()
}

const BURST_LEAD_INS: usize = 4;
const USER_STREAM_BASE: u64 = 1_000;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(invalid("n_users", "must be at least 1"));
        }
        if self.n_terminals == 0 {
            return Err(invalid("n_terminals", "must be at least 1"));
        }
        if self.period.1 <= self.period.0 {
            return Err(invalid("period", "end must be after start"));
        }
        if self.period.1 - self.period.0 < 4 * DAY {
            return Err(invalid("period", "must span at least four days"));
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return Err(invalid("fraud_rate", "must be in (0, 1)"));
        }
        if self.scenario_mix.values().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("scenario_mix", "weights must be finite and non-negative"));
        }
        let total: f64 = self.scenario_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("scenario_mix", format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// `round(target_rows · fraud_rate)`, which must be at least one.
    pub fn fraud_count(&self) -> Result<usize> {
        let n = (self.target_rows as f64 * self.fraud_rate).round() as usize;
        if n == 0 {
            return Err(Error::NoFraudRows {
                target_rows: self.target_rows,
                fraud_rate: self.fraud_rate,
            });
        }
        if n >= self.target_rows {
            return Err(invalid("fraud_rate", "leaves no room for legitimate rows"));
        }
        Ok(n)
    }

    /// Fraud rows per scenario, apportioned by largest remainder with ties
    /// going to the earlier scenario.
    pub fn scenario_counts(&self) -> Result<Vec<(Scenario, usize)>> {
        let n = self.fraud_count()?;
        let weights: Vec<(Scenario, f64)> = Scenario::ALL
            .iter()
            .map(|&s| (s, self.scenario_mix.get(&s).copied().unwrap_or(0.0)))
            .collect();
        let counts = largest_remainder(n, &weights.iter().map(|w| w.1).collect::<Vec<_>>());
        Ok(weights.iter().map(|w| w.0).zip(counts).collect())
    }
}

/// Integer apportionment of `total` proportional to `weights`.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Relative legitimate activity by UTC hour.
const HOURLY_INTENSITY: [f64; 24] = [
    0.06, 0.004, 0.003, 0.003, 0.003, 0.004, 0.08, 0.35, 0.75, 1.0, 1.0, 1.05, 1.2, 1.2, 1.0, 1.0,
    1.0, 1.05, 1.15, 1.1, 0.8, 0.5, 0.3, 0.15,
];

/// Legitimate type mix: purchase, withdrawal, transfer, deposit.
const TYPE_WEIGHTS: [f64; 4] = [70.0, 12.0, 8.0, 10.0];

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

#[derive(Debug, Clone)]
struct Profile {
    mean_amount: f64,
    activity: f64,
    home: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Draft {
    ts: i64,
    user: usize,
    terminal: usize,
    amount: f64,
    tx_type: TxType,
    scenario: Option<Scenario>,
}

fn cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

struct Sampler {
    start: i64,
    end: i64,
    first_midnight: i64,
    n_days: i64,
    hours: WeightedIndex<f64>,
    types: WeightedIndex<f64>,
    spread: LogNormal<f64>,
}

impl Sampler {
    fn new(cfg: &ScenarioConfig) -> Self {
        let (start, end) = cfg.period;
        let first_midnight = start.div_euclid(DAY) * DAY;
        Sampler {
            start,
            end,
            first_midnight,
            n_days: (end - first_midnight + DAY - 1) / DAY,
            hours: WeightedIndex::new(HOURLY_INTENSITY).unwrap(),
            types: WeightedIndex::new(TYPE_WEIGHTS).unwrap(),
            spread: LogNormal::new(-0.08, 0.4).unwrap(),
        }
    }

    fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }

    fn day_start(&self, rng: &mut ChaCha8Rng) -> i64 {
        self.first_midnight + rng.gen_range(0..self.n_days) * DAY
    }

    /// A timestamp drawn from the diurnal profile.
    fn diurnal(&self, rng: &mut ChaCha8Rng) -> i64 {
        loop {
            let ts = self.day_start(rng) + self.hours.sample(rng) as i64 * HOUR + rng.gen_range(0..HOUR);
            if self.contains(ts) {
                return ts;
            }
        }
    }

    /// Uniform start time leaving `before` seconds ahead and `after` behind.
    fn window_start(&self, rng: &mut ChaCha8Rng, before: i64, after: i64) -> i64 {
        rng.gen_range(self.start + before..self.end - after)
    }

    fn amount(&self, rng: &mut ChaCha8Rng, p: &Profile) -> f64 {
        cents(p.mean_amount * self.spread.sample(rng))
    }

    fn tx_type(&self, rng: &mut ChaCha8Rng) -> TxType {
        TxType::ALL[self.types.sample(rng)]
    }
}

fn make_profile(rng: &mut ChaCha8Rng, n_terminals: usize) -> Profile {
    let mean = LogNormal::new(3.4, 0.5).unwrap();
    let activity = LogNormal::new(0.0, 0.6).unwrap();
    let n_home = rng.gen_range(1..=3usize).min(n_terminals);
    Profile {
        mean_amount: mean.sample(rng),
        activity: activity.sample(rng),
        home: sample(rng, n_terminals, n_home).into_vec(),
    }
}

fn home_terminal(rng: &mut ChaCha8Rng, p: &Profile, n_terminals: usize) -> usize {
    if rng.gen_bool(0.85) {
        p.home[rng.gen_range(0..p.home.len())]
    } else {
        rng.gen_range(0..n_terminals)
    }
}

/// Sorted offsets in `[0, span)`, the first pinned at zero.
fn offsets(rng: &mut ChaCha8Rng, k: usize, span: i64) -> Vec<i64> {
    let mut v: Vec<i64> = (0..k).map(|i| if i == 0 { 0 } else { rng.gen_range(0..span) }).collect();
    v.sort_unstable();
    v
}

struct Injection {
    drafts: Vec<Draft>,
    lead_ins: usize,
    new_users: Vec<Profile>,
}

fn inject(
    cfg: &ScenarioConfig,
    s: &Sampler,
    profiles: &[Profile],
    scenario: Scenario,
    count: usize,
    out: &mut Injection,
) {
    let mut rng = stream(cfg.seed, scenario.stream());
    let nt = cfg.n_terminals;
    let mut left = count;
    while left > 0 {
        match scenario {
            Scenario::Burst => {
                let k = rng.gen_range(5..=8usize).min(left);
                let u = rng.gen_range(0..cfg.n_users);
                let p = &profiles[u];
                let t0 = s.window_start(&mut rng, 2 * DAY, 3 * HOUR);
                for _ in 0..BURST_LEAD_INS {
                    let ts = t0 - rng.gen_range(2 * HOUR..40 * HOUR);
                    out.drafts.push(Draft {
                        ts,
                        user: u,
                        terminal: home_terminal(&mut rng, p, nt),
                        amount: s.amount(&mut rng, p),
                        tx_type: s.tx_type(&mut rng),
                        scenario: None,
                    });
                }
                out.lead_ins += BURST_LEAD_INS;
                for off in offsets(&mut rng, k, 2 * HOUR) {
                    out.drafts.push(Draft {
                        ts: t0 + off,
                        user: u,
                        terminal: home_terminal(&mut rng, p, nt),
                        amount: s.amount(&mut rng, p),
                        tx_type: s.tx_type(&mut rng),
                        scenario: Some(scenario),
                    });
                }
                left -= k;
            }
            Scenario::NightOwl => {
                let k = rng.gen_range(2..=3usize).min(left);
                let u = rng.gen_range(0..cfg.n_users);
                let t0 = loop {
                    let t = s.day_start(&mut rng) + rng.gen_range(1..=5) * HOUR;
                    if s.contains(t) && s.contains(t + HOUR - 1) {
                        break t;
                    }
                };
                for off in offsets(&mut rng, k, HOUR) {
                    out.drafts.push(Draft {
                        ts: t0 + off,
                        user: u,
                        terminal: rng.gen_range(0..nt),
                        amount: s.amount(&mut rng, &profiles[u]),
                        tx_type: TxType::Withdrawal,
                        scenario: Some(scenario),
                    });
                }
                left -= k;
            }
            Scenario::NewAccountAbuse => {
                let k = rng.gen_range(3..=6usize).min(left);
                let u = cfg.n_users + out.new_users.len();
                let p = make_profile(&mut rng, nt);
                let t0 = s.window_start(&mut rng, 0, DAY);
                for off in offsets(&mut rng, k, 6 * HOUR) {
                    out.drafts.push(Draft {
                        ts: t0 + off,
                        user: u,
                        terminal: rng.gen_range(0..nt),
                        amount: s.amount(&mut rng, &p),
                        tx_type: s.tx_type(&mut rng),
                        scenario: Some(scenario),
                    });
                }
                out.new_users.push(p);
                left -= k;
            }
            Scenario::TerminalCompromise => {
                let k = rng.gen_range(6..=10usize).min(left);
                let terminal = rng.gen_range(0..nt);
                let t0 = s.window_start(&mut rng, 0, 3 * HOUR);
                let users: Vec<usize> = if cfg.n_users >= k {
                    sample(&mut rng, cfg.n_users, k).into_vec()
                } else {
                    (0..k).map(|_| rng.gen_range(0..cfg.n_users)).collect()
                };
                for (off, u) in offsets(&mut rng, k, 3 * HOUR).into_iter().zip(users) {
                    out.drafts.push(Draft {
                        ts: t0 + off,
                        user: u,
                        terminal,
                        amount: s.amount(&mut rng, &profiles[u]),
                        tx_type: TxType::Purchase,
                        scenario: Some(scenario),
                    });
                }
                left -= k;
            }
            Scenario::AmountSpike => {
                let u = rng.gen_range(0..cfg.n_users);
                let p = &profiles[u];
                out.drafts.push(Draft {
                    ts: s.diurnal(&mut rng),
                    user: u,
                    terminal: home_terminal(&mut rng, p, nt),
                    amount: cents(p.mean_amount * rng.gen_range(8.0..15.0)),
                    tx_type: TxType::Transfer,
                    scenario: Some(scenario),
                });
                left -= 1;
            }
        }
    }
}

/// Generate a labeled dataset with exactly `round(target_rows · fraud_rate)`
/// fraud rows and `target_rows` rows in total.
pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let counts = cfg.scenario_counts()?;
    let n_fraud = cfg.fraud_count()?;
    let sampler = Sampler::new(cfg);

    let mut master = stream(cfg.seed, 0);
    let profiles: Vec<Profile> = (0..cfg.n_users).map(|_| make_profile(&mut master, cfg.n_terminals)).collect();

    let mut inj = Injection {
        drafts: Vec::with_capacity(n_fraud * 2),
        lead_ins: 0,
        new_users: Vec::new(),
    };
    for &(scenario, count) in &counts {
        inject(cfg, &sampler, &profiles, scenario, count, &mut inj);
    }

    let legit_budget = cfg
        .target_rows
        .checked_sub(n_fraud + inj.lead_ins)
        .ok_or_else(|| invalid("target_rows", "too small to hold the burst lead-in transactions"))?;
    let activity: Vec<f64> = profiles.iter().map(|p| p.activity).collect();
    let per_user = largest_remainder(legit_budget, &activity);

    let mut drafts = inj.drafts;
    drafts.reserve(legit_budget);
    for (u, (&n, p)) in per_user.iter().zip(&profiles).enumerate() {
        let mut rng = stream(cfg.seed, USER_STREAM_BASE + u as u64);
        for _ in 0..n {
            drafts.push(Draft {
                ts: sampler.diurnal(&mut rng),
                user: u,
                terminal: home_terminal(&mut rng, p, cfg.n_terminals),
                amount: sampler.amount(&mut rng, p),
                tx_type: sampler.tx_type(&mut rng),
                scenario: None,
            });
        }
    }

    drafts.sort_by(|a, b| {
        a.ts.cmp(&b.ts)
            .then(a.user.cmp(&b.user))
            .then(a.terminal.cmp(&b.terminal))
            .then(a.amount.total_cmp(&b.amount))
    });
    let transactions = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| Transaction {
            tx_id: format!("T{i:09}"),
            timestamp: d.ts,
            user_id: format!("U{:06}", d.user),
            terminal_id: format!("P{:05}", d.terminal),
            amount: d.amount,
            tx_type: d.tx_type,
            label: Some(if d.scenario.is_some() { Label::Fraud } else { Label::Legit }),
            scenario: d.scenario.map(|s| s.as_str().to_string()),
        })
        .collect();
    Ok(Dataset::new(transactions))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub fraud_count: usize,
    pub fraud_rate: Option<f64>,
    /// Fraud rows by scenario tag; untagged fraud rows appear as `untagged`.
    pub per_scenario: BTreeMap<String, usize>,
    /// Row count per UTC calendar day.
    pub per_day: BTreeMap<String, usize>,
}

pub fn describe(d: &Dataset) -> DatasetSummary {
    let mut per_scenario = BTreeMap::new();
    let mut per_day: BTreeMap<String, usize> = BTreeMap::new();
    for t in &d.transactions {
        if t.is_fraud() {
            let key = t.scenario.clone().unwrap_or_else(|| "untagged".into());
            *per_scenario.entry(key).or_insert(0) += 1;
        }
        let day = crate::domain::format_timestamp(t.timestamp.div_euclid(DAY) * DAY);
        *per_day.entry(day[..10].to_string()).or_insert(0) += 1;
    }
    DatasetSummary {
        rows: d.len(),
        fraud_count: d.meta.fraud_count,
        fraud_rate: d.meta.fraud_rate,
        per_scenario,
        per_day,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::write_transactions;
    use crate::enrich::{enrich, EnrichConfig};

    fn small(target_rows: usize, fraud_rate: f64) -> ScenarioConfig {
        ScenarioConfig {
            n_users: 300,
            n_terminals: 60,
            target_rows,
            fraud_rate,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn exact_fraud_count() {
        let d = generate(&small(10_000, 0.0013)).unwrap();
        assert_eq!(d.len(), 10_000);
        assert_eq!(d.meta.fraud_count, 13);
        assert_eq!(d.meta.fraud_rate, Some(0.0013));
        let s = describe(&d);
        assert_eq!(s.per_scenario.values().sum::<usize>(), 13);
        assert_eq!(s.per_day.values().sum::<usize>(), 10_000);
    }

    #[test]
    fn zero_fraud_is_an_error() {
        assert!(matches!(generate(&small(100, 0.001)), Err(Error::NoFraudRows { .. })));
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = small(5_000, 0.01);
        let a = write_transactions(&generate(&cfg).unwrap()).unwrap();
        let b = write_transactions(&generate(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = write_transactions(&generate(&ScenarioConfig { seed: 8, ..cfg }).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn timestamps_inside_period() {
        let cfg = small(8_000, 0.02);
        let d = generate(&cfg).unwrap();
        assert!(d.transactions.iter().all(|t| t.timestamp >= cfg.period.0 && t.timestamp < cfg.period.1));
    }

    #[test]
    fn burst_frauds_have_dense_history() {
        let cfg = ScenarioConfig {
            scenario_mix: uniform_mix(&[Scenario::Burst]),
            ..small(10_000, 0.01)
        };
        let d = generate(&cfg).unwrap();
        let rows = enrich(&d, &EnrichConfig::default()).unwrap();
        let bursts: Vec<_> = rows.iter().filter(|r| r.base.scenario.as_deref() == Some("burst")).collect();
        assert_eq!(bursts.len(), 100);
        assert!(bursts.iter().all(|r| r.attrs.user_tx_count_48h >= 5));
    }

    #[test]
    fn scenario_signatures() {
        let d = generate(&small(20_000, 0.02)).unwrap();
        let rows = enrich(&d, &EnrichConfig::default()).unwrap();
        for r in &rows {
            match r.base.scenario.as_deref() {
                Some("night_owl") => {
                    assert!((1..=5).contains(&r.attrs.hour_of_day));
                    assert_eq!(r.base.tx_type, TxType::Withdrawal);
                }
                Some("terminal_compromise") => assert_eq!(r.base.tx_type, TxType::Purchase),
                Some("amount_spike") => assert_eq!(r.base.tx_type, TxType::Transfer),
                _ => {}
            }
        }
        let summary = describe(&d);
        for s in Scenario::ALL {
            assert_eq!(summary.per_scenario[s.as_str()], 80);
        }
    }

    #[test]
    fn apportionment() {
        assert_eq!(largest_remainder(13, &[0.2; 5]), [3, 3, 3, 2, 2]);
        assert_eq!(largest_remainder(10, &[1.0, 0.0]), [10, 0]);
        assert_eq!(largest_remainder(0, &[1.0]), [0]);
    }

    #[test]
    fn invalid_configs_name_their_field() {
        let bad = |f: fn(&mut ScenarioConfig)| {
            let mut c = small(1000, 0.01);
            f(&mut c);
            match generate(&c) {
                Err(Error::InvalidParameter { name, .. }) => name,
                other => panic!("unexpected {other:?}"),
            }
        };
        assert_eq!(bad(|c| c.fraud_rate = 1.5), "fraud_rate");
        assert_eq!(bad(|c| c.period = (10, 5)), "period");
        assert_eq!(bad(|c| c.scenario_mix = uniform_mix(&[Scenario::Burst]).into_keys().map(|k| (k, 0.5)).collect()), "scenario_mix");
        assert_eq!(bad(|c| c.n_users = 0), "n_users");
    }

    #[test]
    fn config_json_round_trip() {
        let c = ScenarioConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"night_owl\":0.2"));
        assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), c);
        let partial: ScenarioConfig = serde_json::from_str(r#"{"target_rows": 10000, "fraud_rate": 0.0013}"#).unwrap();
        assert_eq!(partial.n_users, 2_000);
    }
}
