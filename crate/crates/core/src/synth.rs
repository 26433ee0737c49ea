//! Labeled synthetic corpora and follower injection.
//!
//! Three populations are generated:
//!
//! * organic users: a latent popularity drives every counter, followers
//!   arrive as a slow Poisson stream, and a minority drops a friend or two
//!   for good;
//! * customers: organic-looking profiles that receive bursts of market
//!   followers on one to three service days (negative-binomial daily sizes,
//!   follow times packed into a couple of hours, a share of accounts created
//!   on a single stockpile date) and take part in one market-wide
//!   unfollow/refollow sweep; a configurable share instead sheds followers
//!   after leaving the market;
//! * aggressive customers: customers who additionally unfollow and refollow
//!   a persistent subset of friends every other snapshot.
//!
//! Every user draws from its own ChaCha stream seeded from the master seed,
//! role and index, so a corpus is a pure function of its configuration.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    timestamp, Corpus, FollowerRecord, Label, Timestamp, TweetRecord, UserSnapshot, UserTrace,
};

/// Follower records kept per user: the most recent followers.
pub const FOLLOWER_SAMPLE: usize = 50;
/// Tweet records kept per user: the most recent tweets.
pub const TWEET_SAMPLE: usize = 20;
/// Stable friends tracked alongside any friends involved in churn.
const TRACKED_STABLE_FRIENDS: usize = 5;

const TOPICS: [&str; 24] = [
    "music", "sports", "politics", "tech", "gaming", "fashion", "food", "travel", "news",
    "movies", "art", "science", "health", "business", "education", "books", "photography",
    "comedy", "religion", "cars", "crypto", "fitness", "anime", "startups",
];
const LANGUAGES: [(&str, f64); 8] = [
    ("en", 0.55),
    ("es", 0.12),
    ("pt", 0.08),
    ("ja", 0.08),
    ("fr", 0.05),
    ("ar", 0.05),
    ("tr", 0.04),
    ("id", 0.03),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_organic: usize,
    pub n_customer: usize,
    pub n_aggressive: usize,
    pub snapshot_count: usize,
    pub snapshot_interval_hours: u32,
    #[serde(with = "timestamp")]
    pub start: Timestamp,
    /// Median starting follower count of non-celebrity users.
    pub follower_median: f64,
    /// Log-scale spread of non-celebrity follower counts.
    pub follower_sigma: f64,
    /// Followers gained per day by a typical organic user.
    pub organic_gain_per_day: f64,
    /// Share of organic users with heavy-tailed celebrity popularity.
    pub celebrity_fraction: f64,
    /// Share of organic users that permanently drop one to three friends.
    pub organic_unfollow_fraction: f64,
    /// Mean market followers delivered per service day.
    pub burst_mean_per_day: f64,
    /// Negative-binomial shape of daily burst sizes; smaller is wider.
    pub burst_dispersion: f64,
    /// Probability that an aggressive customer drops each friend of its
    /// churned subset in an unfollow round.
    pub aggressive_unfollow_rate: f64,
    /// Share of customers whose follower count shrinks instead.
    pub negative_gain_fraction: f64,
    /// Share of market followers created on the customer's stockpile date.
    pub stockpile_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_organic: 1000,
            n_customer: 100,
            n_aggressive: 20,
            snapshot_count: 30,
            snapshot_interval_hours: 6,
            start: Utc.with_ymd_and_hms(2016, 4, 1, 0, 0, 0).unwrap(),
            follower_median: 60.0,
            follower_sigma: 1.0,
            organic_gain_per_day: 0.05,
            celebrity_fraction: 0.02,
            organic_unfollow_fraction: 0.15,
            burst_mean_per_day: 125.0,
            burst_dispersion: 4.0,
            aggressive_unfollow_rate: 0.8,
            negative_gain_fraction: 0.168,
            stockpile_fraction: 0.4,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.snapshot_count == 0 {
            return bad("snapshot_count must be at least 1");
        }
        if self.snapshot_interval_hours == 0 {
            return bad("snapshot_interval_hours must be positive");
        }
        let rates = [
            ("organic_gain_per_day", self.organic_gain_per_day),
            ("burst_mean_per_day", self.burst_mean_per_day),
        ];
        for (name, r) in rates {
            if !(r.is_finite() && r >= 0.0) {
                return bad(&format!("{name} must be a finite non-negative rate"));
            }
        }
        if !(self.follower_median.is_finite() && self.follower_median > 0.0) {
            return bad("follower_median must be positive");
        }
        if !(self.follower_sigma.is_finite() && self.follower_sigma >= 0.0) {
            return bad("follower_sigma must be non-negative");
        }
        if !(self.burst_dispersion.is_finite() && self.burst_dispersion > 0.0) {
            return bad("burst_dispersion must be positive");
        }
        let fractions = [
            ("celebrity_fraction", self.celebrity_fraction),
            ("organic_unfollow_fraction", self.organic_unfollow_fraction),
            ("aggressive_unfollow_rate", self.aggressive_unfollow_rate),
            ("negative_gain_fraction", self.negative_gain_fraction),
            ("stockpile_fraction", self.stockpile_fraction),
        ];
        for (name, f) in fractions {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn interval(&self) -> Duration {
        Duration::hours(self.snapshot_interval_hours as i64)
    }

    fn capture_times(&self) -> Vec<Timestamp> {
        (0..self.snapshot_count)
            .map(|i| self.start + self.interval() * i as i32)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Organic,
    Customer,
    Aggressive,
}

impl Role {
    pub fn label(self) -> Label {
        match self {
            Role::Organic => Label::Random,
            Role::Customer | Role::Aggressive => Label::Customer,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Role::Organic => 1,
            Role::Customer => 2,
            Role::Aggressive => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub corpus: Corpus,
    pub roles: BTreeMap<String, Role>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(seed ^ splitmix(a.wrapping_mul(0x1_0000_0001) ^ splitmix(b)))
}

/// Market-wide timing shared by every customer of one corpus.
struct Market {
    /// Transition at which customers run their single unfollow sweep.
    sweep: usize,
    /// Aggressive customers unfollow on transitions with this parity.
    phase: usize,
}

pub fn generate(config: &GeneratorConfig) -> Result<Corpus> {
    generate_with_roles(config).map(|g| g.corpus)
}

pub fn generate_with_roles(config: &GeneratorConfig) -> Result<GeneratedCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 0, 0));
    let transitions = config.snapshot_count.saturating_sub(1);
    let market = Market {
        sweep: if transitions > 1 { rng.random_range(0..transitions - 1) } else { 0 },
        phase: rng.random_range(0..2),
    };

    let mut corpus = Corpus::new();
    let mut roles = BTreeMap::new();
    let plan = [
        (Role::Organic, config.n_organic),
        (Role::Customer, config.n_customer),
        (Role::Aggressive, config.n_aggressive),
    ];
    for (role, n) in plan {
        for i in 0..n {
            let seed = sub_seed(config.seed, role.tag(), i as u64);
            let trace = generate_user(config, &market, role, seed);
            roles.insert(trace.user_id().to_owned(), role);
            corpus.insert(trace, Some(role.label()))?;
        }
    }
    corpus.set_provenance(Some(serde_json::json!({
        "generator": "folcount-synth",
        "config": config,
    })));
    Ok(GeneratedCorpus { corpus, roles })
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

fn lognormal(rng: &mut impl Rng, median: f64, sigma: f64) -> f64 {
    LogNormal::new(median.ln(), sigma).expect("valid lognormal").sample(rng)
}

/// Negative binomial as a gamma-mixed Poisson with the given mean.
fn neg_binomial(rng: &mut impl Rng, mean: f64, shape: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let lambda = Gamma::new(shape, mean / shape).expect("valid gamma").sample(rng);
    poisson(rng, lambda)
}

fn pick_language(rng: &mut impl Rng) -> &'static str {
    let mut x: f64 = rng.random();
    for (lang, w) in LANGUAGES {
        if x < w {
            return lang;
        }
        x -= w;
    }
    LANGUAGES[0].0
}

fn pick_topics(rng: &mut impl Rng, n: usize) -> BTreeSet<String> {
    let mut all = TOPICS.to_vec();
    all.shuffle(rng);
    all.into_iter().take(n).map(str::to_owned).collect()
}

fn uniform_time(rng: &mut impl Rng, lo: Timestamp, hi: Timestamp) -> Timestamp {
    let span = (hi - lo).num_seconds();
    if span <= 0 {
        return hi;
    }
    lo + Duration::seconds(rng.random_range(1..=span))
}

fn earliest_account() -> Timestamp {
    Utc.with_ymd_and_hms(2007, 1, 1, 0, 0, 0).unwrap()
}

/// A follower account that existed for a while before following.
fn follower(
    rng: &mut impl Rng,
    id: String,
    followed: Timestamp,
    host_topics: &BTreeSet<String>,
    host_language: &str,
    homophily: f64,
) -> FollowerRecord {
    let latest = followed - Duration::days(1);
    let created = if latest > earliest_account() {
        uniform_time(rng, earliest_account(), latest)
    } else {
        followed
    };
    let n_topics = rng.random_range(0..=3);
    let mut topics = pick_topics(rng, n_topics);
    if rng.random_bool(homophily) {
        let pick = rng.random_range(0..host_topics.len().max(1));
        if let Some(t) = host_topics.iter().nth(pick) {
            topics.insert(t.clone());
        }
    }
    let tweet_language = if rng.random_bool(0.5 + 0.4 * homophily) {
        host_language.to_owned()
    } else {
        pick_language(rng).to_owned()
    };
    FollowerRecord {
        follower_id: id,
        account_created_at: created,
        first_followed_at: followed,
        bio_topics: topics,
        tweet_language,
    }
}

/// Everything needed to render a user's snapshots.
struct Draft {
    user_id: String,
    times: Vec<Timestamp>,
    profile: UserSnapshot,
    followers0: u64,
    friends0: u64,
    tweets0: u64,
    /// New followers inside the observation window.
    arrivals: Vec<FollowerRecord>,
    /// Follower records observed at the final snapshot.
    sample: Vec<FollowerRecord>,
    losses: Vec<Timestamp>,
    friend_adds: Vec<Timestamp>,
    tweet_times: Vec<Timestamp>,
    old_tweets: Vec<Timestamp>,
    tracked: Vec<String>,
    /// Tracked friends missing at each snapshot.
    absent: Vec<BTreeSet<String>>,
}

impl Draft {
    fn render(self, rng: &mut impl Rng) -> UserTrace {
        let count_until = |events: &mut dyn Iterator<Item = Timestamp>, t: Timestamp| {
            events.filter(|e| *e <= t).count() as u64
        };
        let language = self.profile.tweet_language.clone();
        let mut snapshots = Vec::with_capacity(self.times.len());
        for (i, &t) in self.times.iter().enumerate() {
            let mut s = self.profile.clone();
            s.captured_at = t;
            let gained = count_until(&mut self.arrivals.iter().map(|r| r.first_followed_at), t);
            let lost = count_until(&mut self.losses.iter().copied(), t);
            s.follower_count = (self.followers0 + gained).saturating_sub(lost);
            s.friend_count = self.friends0 + count_until(&mut self.friend_adds.iter().copied(), t)
                - self.absent[i].len() as u64;
            s.tweet_count = self.tweets0 + count_until(&mut self.tweet_times.iter().copied(), t);
            s.friend_ids = Some(
                self.tracked
                    .iter()
                    .filter(|f| !self.absent[i].contains(*f))
                    .cloned()
                    .collect(),
            );
            snapshots.push(s);
        }

        let last = *self.times.last().expect("at least one snapshot");
        snapshots.last_mut().unwrap().follower_records = Some(self.sample);

        let mut posted: Vec<Timestamp> = self.tweet_times.into_iter().filter(|t| *t <= last).collect();
        posted.extend(self.old_tweets);
        posted.sort_by(|a, b| b.cmp(a));
        posted.truncate(TWEET_SAMPLE);
        let tweets = posted
            .into_iter()
            .map(|t| TweetRecord {
                user_id: self.user_id.clone(),
                posted_at: t,
                is_retweet: rng.random_bool(0.3),
                mention_count: poisson(rng, 0.7) as u32,
                hashtag_count: poisson(rng, 0.4) as u32,
                url_count: poisson(rng, 0.3) as u32,
                language: if rng.random_bool(0.85) {
                    language.clone()
                } else {
                    pick_language(rng).to_owned()
                },
            })
            .collect();

        UserTrace::new(self.user_id, snapshots, tweets).expect("generated trace is valid")
    }
}

fn generate_user(config: &GeneratorConfig, market: &Market, role: Role, seed: u64) -> UserTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let user_id = format!("u{:016x}", splitmix(seed));
    let times = config.capture_times();
    let first = times[0];
    let last = *times.last().unwrap();
    let span_days = (last - first).num_seconds() as f64 / 86_400.0;

    // Latent popularity drives every counter.
    let celebrity = role == Role::Organic && rng.random_bool(config.celebrity_fraction);
    let followers0 = if celebrity {
        lognormal(rng, 30_000.0, 0.8)
    } else {
        lognormal(rng, config.follower_median, config.follower_sigma)
    }
    .round() as u64;
    let popularity = (followers0.max(1) as f64 / config.follower_median).ln();

    let friends0 = if celebrity {
        lognormal(rng, (followers0 as f64).sqrt() * 3.0, 0.5)
    } else {
        lognormal(rng, 0.9 * followers0.max(5) as f64, 0.4).min(5000.0)
    }
    .round()
    .max(5.0) as u64;
    let tweets0 = (20.0 * (followers0.max(1) as f64).powf(0.8) * lognormal(rng, 1.0, 0.6)).round() as u64;
    let listed = (followers0 as f64 / 80.0 * lognormal(rng, 1.0, 0.4)).round() as u64;
    let favorited = (3.0 * (followers0.max(1) as f64).powf(0.9) * lognormal(rng, 1.0, 0.6)).round() as u64;
    let account_age_days = rng.random_range(200.0..3000.0);

    let language = pick_language(rng).to_owned();
    let n_topics = (1.5 + 0.4 * popularity + rng.random_range(-1.5..1.5)).round().clamp(0.0, 5.0) as usize;
    let topics = pick_topics(rng, n_topics);
    let profile = UserSnapshot {
        user_id: user_id.clone(),
        captured_at: first,
        follower_count: 0,
        friend_count: 0,
        tweet_count: 0,
        listed_count: listed,
        favorited_count: favorited,
        has_bio: rng.random_bool((0.55 + 0.08 * popularity).clamp(0.05, 0.98)),
        has_profile_image: rng.random_bool((0.8 + 0.05 * popularity).clamp(0.05, 0.99)),
        is_verified: celebrity && rng.random_bool(0.7) || followers0 > 5000 && rng.random_bool(0.1),
        is_celebrity: celebrity,
        bio_topics: topics.clone(),
        tweet_language: language.clone(),
        friend_ids: None,
        follower_records: None,
    };

    // Organic follower stream inside the window and before it.
    let gain_rate = config.organic_gain_per_day * followers0 as f64 / config.follower_median * lognormal(rng, 1.0, 0.5);
    let mut serial = 0usize;
    let mut next_id = |prefix: &str| {
        serial += 1;
        format!("{user_id}.{prefix}{serial}")
    };
    let mut arrivals: Vec<FollowerRecord> = (0..poisson(rng, gain_rate * span_days))
        .map(|_| {
            let t = uniform_time(rng, first, last);
            follower(rng, next_id("f"), t, &topics, &language, 0.5)
        })
        .collect();
    let mut losses: Vec<Timestamp> = (0..poisson(rng, 0.3 * gain_rate * span_days))
        .map(|_| uniform_time(rng, first, last))
        .collect();

    let tweet_rate = 0.3 * (followers0.max(1) as f64).powf(0.3) * lognormal(rng, 1.0, 0.6);
    let tweet_times: Vec<Timestamp> = (0..poisson(rng, tweet_rate * span_days))
        .map(|_| uniform_time(rng, first, last))
        .collect();
    let mut old_tweets = Vec::new();
    let mut t = first;
    for _ in 0..TWEET_SAMPLE.min(tweets0 as usize) {
        let gap: f64 = -rng.random::<f64>().max(1e-12).ln() / tweet_rate;
        t -= Duration::seconds((gap * 86_400.0) as i64 + 1);
        old_tweets.push(t);
    }
    let mut friend_adds: Vec<Timestamp> = (0..poisson(rng, 0.2 * gain_rate * span_days + 0.05 * span_days))
        .map(|_| uniform_time(rng, first, last))
        .collect();

    // Tracked friends and their churn.
    let transitions = times.len() - 1;
    let mut absent = vec![BTreeSet::new(); times.len()];
    let mut tracked: Vec<String> = Vec::new();
    let track = |n: usize, tracked: &mut Vec<String>| -> Vec<String> {
        let ids: Vec<String> = (0..n).map(|j| format!("{user_id}.g{}", tracked.len() + j)).collect();
        tracked.extend(ids.iter().cloned());
        ids
    };
    track(TRACKED_STABLE_FRIENDS.min(friends0 as usize), &mut tracked);

    match role {
        Role::Organic => {
            if transitions > 0 && rng.random_bool(config.organic_unfollow_fraction) {
                let dropped = track(rng.random_range(1..=3), &mut tracked);
                for f in dropped {
                    let at = rng.random_range(0..transitions);
                    for gone in &mut absent[at + 1..] {
                        gone.insert(f.clone());
                    }
                }
            }
        }
        Role::Customer | Role::Aggressive => {
            if transitions > 0 {
                // One market-wide sweep: unfollow a batch, refollow it next.
                let batch = track(rng.random_range(10..=20), &mut tracked);
                let at = market.sweep.min(transitions - 1);
                absent[at + 1].extend(batch);
            }
            if role == Role::Aggressive && transitions > 1 {
                let subset = track(rng.random_range(12..=16), &mut tracked);
                for at in (market.phase..transitions).step_by(2) {
                    for f in &subset {
                        if rng.random_bool(config.aggressive_unfollow_rate) {
                            absent[at + 1].insert(f.clone());
                        }
                    }
                }
            }

            if rng.random_bool(config.negative_gain_fraction) {
                // Former subscriber: market accounts drift away.
                let share = rng.random_range(0.01..0.1);
                let lost = (followers0 as f64 * share).round() as u64 + 1;
                losses.extend((0..lost).map(|_| uniform_time(rng, first, last)));
            } else {
                let days = span_days.floor().max(1.0) as i64;
                let mut service_days: Vec<i64> = (0..days).collect();
                service_days.shuffle(rng);
                let n_days = rng.random_range(1..=3);
                service_days.truncate(n_days);
                let stockpile_date = first - Duration::days(rng.random_range(30..600));
                for day in service_days {
                    let n = neg_binomial(rng, config.burst_mean_per_day, config.burst_dispersion);
                    let day_start = first + Duration::days(day);
                    let burst_start = uniform_time(rng, day_start, day_start + Duration::hours(20));
                    let burst_end = (burst_start + Duration::hours(rng.random_range(1..=3))).min(last);
                    for _ in 0..n {
                        let t = uniform_time(rng, burst_start.min(burst_end - Duration::seconds(1)), burst_end);
                        let mut rec = follower(rng, next_id("m"), t, &BTreeSet::new(), &language, 0.0);
                        if rng.random_bool(config.stockpile_fraction) {
                            rec.account_created_at = stockpile_date + Duration::seconds(rng.random_range(0..86_400));
                        }
                        arrivals.push(rec);
                    }
                    // Follow-back obligations of the market.
                    let follows = neg_binomial(rng, config.burst_mean_per_day / 2.0, config.burst_dispersion);
                    friend_adds.extend((0..follows).map(|_| uniform_time(rng, burst_start, burst_end)));
                }
            }
        }
    }

    // The follower sample is drawn uniformly from the whole follower list:
    // window arrivals in proportion to their share, the rest from a steady
    // stream over the account's lifetime.
    let final_count = (followers0 + arrivals.len() as u64).saturating_sub(losses.len() as u64);
    let n_sample = FOLLOWER_SAMPLE.min(final_count as usize);
    let share = arrivals.len() as f64 / (followers0 + arrivals.len() as u64).max(1) as f64;
    let mut pool: Vec<usize> = (0..arrivals.len()).collect();
    pool.shuffle(rng);
    let mut sample = Vec::with_capacity(n_sample);
    for _ in 0..n_sample {
        match pool.pop() {
            Some(i) if rng.random_bool(share) => sample.push(arrivals[i].clone()),
            _ => {
                let t = uniform_time(rng, first - Duration::days(account_age_days as i64), first);
                sample.push(follower(rng, next_id("f"), t, &topics, &language, 0.5));
            }
        }
    }
    sample.sort_by(|a, b| b.first_followed_at.cmp(&a.first_followed_at).then(a.follower_id.cmp(&b.follower_id)));

    let friends0 = friends0.max(tracked.len() as u64);
    Draft {
        user_id: user_id.clone(),
        times,
        profile,
        followers0,
        friends0,
        tweets0,
        arrivals,
        sample,
        losses,
        friend_adds,
        tweet_times,
        old_tweets,
        tracked,
        absent,
    }
    .render(rng)
}

/// Followers a market delivers to one subscriber over a week: one to three
/// service days with negative-binomial daily sizes, at least one follower.
pub fn market_delivery(config: &GeneratorConfig, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 5, 0));
    let days = rng.random_range(1..=3);
    (0..days)
        .map(|_| neg_binomial(&mut rng, config.burst_mean_per_day, config.burst_dispersion))
        .sum::<u64>()
        .max(1)
}

/// Adds `amount` purchased followers inside the trace's observation window.
///
/// A `burstiness` share (clamped to [0, 1]) arrives within one hour at a
/// random moment and was created on a single stockpile date; the rest
/// arrives uniformly. Follower counts grow cumulatively, so the first
/// snapshot of a multi-snapshot trace is unchanged and the last gains
/// exactly `amount`. The newest injected accounts are appended to the final
/// snapshot's follower records.
pub fn inject_manipulation(trace: &UserTrace, amount: u64, burstiness: f64, seed: u64) -> UserTrace {
    if amount == 0 {
        return trace.clone();
    }
    let burstiness = if burstiness.is_nan() { 0.0 } else { burstiness.clamp(0.0, 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 4, trace.displayed_follower_count()));
    let rng = &mut rng;
    let (user_id, mut snapshots, tweets) = trace.clone().into_parts();
    let first = snapshots[0].captured_at;
    let last = snapshots.last().unwrap().captured_at;
    // A single snapshot has no window; use the preceding day.
    let lo = if last > first { first } else { last - Duration::days(1) };

    let burst = if burstiness > 0.0 {
        ((amount as f64 * burstiness).round() as u64).clamp(1, amount)
    } else {
        0
    };
    let burst_start = uniform_time(rng, lo, (last - Duration::hours(1)).max(lo + Duration::seconds(1)));
    let burst_end = (burst_start + Duration::hours(1)).min(last);
    let stockpile_date = lo - Duration::days(rng.random_range(30..600));
    let tag = splitmix(seed ^ splitmix(trace.displayed_follower_count()));

    let language = snapshots.last().unwrap().tweet_language.clone();
    let mut injected: Vec<FollowerRecord> = (0..amount)
        .map(|k| {
            let t = if k < burst {
                uniform_time(rng, burst_start.min(burst_end - Duration::seconds(1)), burst_end)
            } else {
                uniform_time(rng, lo, last)
            };
            let mut rec = follower(rng, format!("inj{tag:016x}.{k}"), t, &BTreeSet::new(), &language, 0.0);
            if k < burst {
                rec.account_created_at = stockpile_date + Duration::seconds(rng.random_range(0..86_400));
            }
            rec
        })
        .collect();

    for s in &mut snapshots {
        let added = injected.iter().filter(|r| r.first_followed_at <= s.captured_at).count() as u64;
        s.follower_count += added;
    }

    let final_snapshot = snapshots.last_mut().unwrap();
    let mut records = final_snapshot.follower_records.take().unwrap_or_default();
    injected.sort_by(|a, b| b.first_followed_at.cmp(&a.first_followed_at).then(a.follower_id.cmp(&b.follower_id)));
    injected.truncate(records.len().max(FOLLOWER_SAMPLE));
    records.extend(injected);
    final_snapshot.follower_records = Some(records);

    UserTrace::new(user_id, snapshots, tweets).expect("injection keeps the trace valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering;
    use crate::features::{self, dims, Counter};
    use crate::model::write_corpus;
    use proptest::prelude::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            seed,
            n_organic: 60,
            n_customer: 20,
            n_aggressive: 10,
            ..GeneratorConfig::default()
        }
    }

    fn text(c: &Corpus) -> Vec<u8> {
        let mut buf = Vec::new();
        write_corpus(c, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_config_gives_empty_corpus() {
        let cfg = GeneratorConfig {
            n_organic: 0,
            n_customer: 0,
            n_aggressive: 0,
            ..GeneratorConfig::default()
        };
        assert!(generate(&cfg).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small(9)).unwrap();
        let b = generate(&small(9)).unwrap();
        assert_eq!(text(&a), text(&b));
        assert_ne!(text(&a), text(&generate(&small(10)).unwrap()));
        assert_eq!(a.provenance().unwrap()["config"]["seed"], 9);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            GeneratorConfig { snapshot_count: 0, ..small(0) },
            GeneratorConfig { stockpile_fraction: 1.5, ..small(0) },
            GeneratorConfig { organic_gain_per_day: -1.0, ..small(0) },
            GeneratorConfig { burst_dispersion: 0.0, ..small(0) },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn config_file_fields_default() {
        let cfg: GeneratorConfig = serde_json::from_str(r#"{"seed": 3, "n_organic": 5}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.snapshot_count, 30);
        assert!(serde_json::from_str::<GeneratorConfig>(r#"{"seeds": 3}"#).is_err());
    }

    #[test]
    fn roles_and_labels_agree() {
        let g = generate_with_roles(&small(4)).unwrap();
        assert_eq!(g.corpus.len(), 90);
        for (id, role) in &g.roles {
            assert_eq!(g.corpus.label(id), Some(role.label()));
        }
        let count = |r: Role| g.roles.values().filter(|&&x| x == r).count();
        assert_eq!((count(Role::Organic), count(Role::Customer), count(Role::Aggressive)), (60, 20, 10));
    }

    #[test]
    fn populations_look_like_their_roles() {
        let g = generate_with_roles(&GeneratorConfig { seed: 2, n_organic: 400, n_customer: 100, n_aggressive: 60, ..GeneratorConfig::default() }).unwrap();
        let mean = |role: Role, f: &dyn Fn(&UserTrace) -> f64| {
            let v: Vec<f64> = g.corpus.traces().filter(|t| g.roles[t.user_id()] == role).map(f).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let entropy = |t: &UserTrace| features::unfollow_entropy(t);
        assert!(mean(Role::Aggressive, &entropy) > 3.0 * mean(Role::Organic, &entropy));

        let gain = |t: &UserTrace| features::gain_per_day(t, Counter::Followers);
        assert!(mean(Role::Customer, &gain) > 10.0 * mean(Role::Organic, &gain).max(0.01));

        let negative = g
            .corpus
            .traces()
            .filter(|t| g.roles[t.user_id()] != Role::Organic)
            .filter(|t| features::gain_per_day(t, Counter::Followers) < 0.0)
            .count();
        assert!((10..=50).contains(&negative), "{negative} of 160 customers lost followers");

        let spike = |t: &UserTrace| features::featurize(t)[dims::FOLLOW_SPIKE];
        assert!(mean(Role::Customer, &spike) > mean(Role::Organic, &spike));
    }

    #[test]
    fn planted_behaviors_cluster() {
        let cfg = GeneratorConfig {
            seed: 11,
            n_organic: 34,
            n_customer: 33,
            n_aggressive: 33,
            organic_unfollow_fraction: 0.0,
            ..GeneratorConfig::default()
        };
        let g = generate_with_roles(&cfg).unwrap();
        let series: Vec<_> = g.corpus.traces().map(clustering::unfollow_series).collect();
        let a = clustering::spectral_cluster(&series, 3, cfg.seed).unwrap();
        for (id, &label) in &a.labels {
            let expected = match g.roles[id] {
                Role::Organic => 0,
                Role::Customer => 1,
                Role::Aggressive => 2,
            };
            assert_eq!(label, expected, "{id}");
        }
    }

    #[test]
    fn injection_contract() {
        let corpus = generate(&small(5)).unwrap();
        for (i, t) in corpus.traces().take(30).enumerate() {
            assert_eq!(&inject_manipulation(t, 0, 0.7, 1), t);
            let m = inject_manipulation(t, 1000, 0.5, i as u64);
            assert_eq!(m.displayed_follower_count(), t.displayed_follower_count() + 1000);
            assert_eq!(m.first().follower_count, t.first().follower_count);
            let added: Vec<u64> = m
                .snapshots()
                .iter()
                .zip(t.snapshots())
                .map(|(a, b)| a.follower_count - b.follower_count)
                .collect();
            assert!(added.windows(2).all(|w| w[0] <= w[1]));
            assert!(
                features::gain_per_day(&m, Counter::Followers) > features::gain_per_day(t, Counter::Followers)
            );
            let twice = inject_manipulation(&m, 40, 0.2, 99);
            assert_eq!(twice.displayed_follower_count(), t.displayed_follower_count() + 1040);
        }
    }

    #[test]
    fn single_snapshot_injection() {
        let t = crate::model::fixtures::trace("u", &[7]);
        let m = inject_manipulation(&t, 5, 1.0, 0);
        assert_eq!(m.displayed_follower_count(), 12);
        assert_eq!(m.final_followers().len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn generated_traces_are_valid_and_finite(seed in any::<u64>()) {
            let cfg = GeneratorConfig { seed, n_organic: 15, n_customer: 6, n_aggressive: 4, ..GeneratorConfig::default() };
            let corpus = generate(&cfg).unwrap();
            let reread = crate::model::read_corpus(&text(&corpus)[..], crate::model::SCHEMA_VERSION).unwrap();
            prop_assert!(reread.rejections.is_empty());
            prop_assert_eq!(&reread.corpus, &corpus);
            for t in corpus.traces() {
                let v = features::featurize(t);
                prop_assert!(v.is_finite());
                prop_assert!((0.0..=1.0).contains(&v[dims::UNFOLLOW_ENTROPY]));
                prop_assert!(v[dims::FOLLOW_SPIKE] >= 0.0 && v[dims::CREATION_SPIKE] >= 0.0);
                prop_assert_eq!(t.snapshots().len(), 30);
            }
        }

        #[test]
        fn bursts_raise_the_follow_spike(seed in any::<u64>(), amount in 30u64..3000, burstiness in 0.05f64..1.0) {
            let cfg = GeneratorConfig { seed, n_organic: 8, n_customer: 0, n_aggressive: 0, ..GeneratorConfig::default() };
            for t in generate(&cfg).unwrap().traces() {
                let m = inject_manipulation(t, amount, burstiness, seed);
                prop_assert!(features::featurize(&m)[dims::FOLLOW_SPIKE] > features::featurize(t)[dims::FOLLOW_SPIKE]);
            }
        }
    }
}
