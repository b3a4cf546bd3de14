//! API spend and human-coding baselines.
//!
//! Money is carried as [`Decimal`] so products like `19 h x 12.35/h` come
//! out exact; rounding happens only in [`format_money`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rust_decimal::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prices per 1000 tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub input_per_1k: Decimal,
    pub output_per_1k: Decimal,
    #[serde(default = "default_currency")]
    pub currency: String,
}

fn default_currency() -> String {
    "USD".into()
}

impl CostModel {
    pub fn new(input_per_1k: Decimal, output_per_1k: Decimal, currency: impl Into<String>) -> Result<Self> {
        let m = CostModel { input_per_1k, output_per_1k, currency: currency.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_per_1k.is_sign_negative() || self.output_per_1k.is_sign_negative() {
            return Err(Error::Config("token rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// Rates per model name, read from TOML:
///
/// ```toml
/// [models."text-davinci-003"]
/// input_per_1k = 0.02
/// output_per_1k = 0.02
/// currency = "USD"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingTable {
    pub models: BTreeMap<String, CostModel>,
}

impl PricingTable {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let t: PricingTable =
            toml::from_str(src).map_err(|e| Error::Config(format!("cannot parse pricing: {e}")))?;
        for m in t.models.values() {
            m.validate()?;
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&crate::io::read_to_string(path)?)
    }

    pub fn get(&self, model: &str) -> Result<&CostModel> {
        self.models
            .get(model)
            .ok_or_else(|| Error::Config(format!("no pricing configured for model `{model}`")))
    }
}

pub fn request_cost(prompt_tokens: u64, completion_tokens: u64, model: &CostModel) -> Decimal {
    let thousand = Decimal::from(1000);
    Decimal::from(prompt_tokens) / thousand * model.input_per_1k
        + Decimal::from(completion_tokens) / thousand * model.output_per_1k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusCost {
    pub count: usize,
    pub total: Decimal,
    pub mean: Decimal,
}

pub fn corpus_cost(per_instance: &[Decimal]) -> Result<CorpusCost> {
    if per_instance.is_empty() {
        return Err(Error::Invalid("no per-instance costs".into()));
    }
    let total: Decimal = per_instance.iter().sum();
    Ok(CorpusCost { count: per_instance.len(), total, mean: total / Decimal::from(per_instance.len()) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanBaseline {
    pub sentences_per_hour: Decimal,
    pub wage_per_hour: Decimal,
    pub n_coders: u32,
    #[serde(default = "default_currency")]
    pub currency: String,
}

impl HumanBaseline {
    pub fn validate(&self) -> Result<()> {
        if self.sentences_per_hour <= Decimal::ZERO || self.wage_per_hour <= Decimal::ZERO || self.n_coders == 0 {
            return Err(Error::Invalid("human baseline rates and coder count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HumanCost {
    pub hours: Decimal,
    pub total: Decimal,
}

pub fn human_cost(n_instances: u64, baseline: &HumanBaseline, hours_override: Option<Decimal>) -> Result<HumanCost> {
    baseline.validate()?;
    let hours = match hours_override {
        Some(h) if h <= Decimal::ZERO => return Err(Error::Invalid("hours must be positive".into())),
        Some(h) => h,
        None => Decimal::from(n_instances) / baseline.sentences_per_hour,
    };
    Ok(HumanCost { hours, total: hours * baseline.wage_per_hour * Decimal::from(baseline.n_coders) })
}

/// `human_minutes / machine_minutes`.
pub fn speedup(human_minutes: f64, machine_minutes: f64) -> Result<f64> {
    if machine_minutes <= 0.0 {
        return Err(Error::Invalid("machine time must be positive".into()));
    }
    Ok(human_minutes / machine_minutes)
}

/// Rounds half away from zero to `decimals` places.
pub fn format_money(amount: Decimal, decimals: u32) -> String {
    let r = amount.round_dp_with_strategy(decimals, RoundingStrategy::MidpointAwayFromZero);
    format!("{r:.prec$}", prec = decimals as usize)
}

/// Token counts recorded for one logged request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedUsage {
    pub model: String,
    pub prompt_hash: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActualSpend {
    pub currency: String,
    /// Unique (model, prompt) requests billed; cached repeats are counted once.
    pub requests: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub prompt_cost: Decimal,
    pub completion_cost: Decimal,
    pub total: Decimal,
    pub mean_per_request: Decimal,
}

/// Sums spend over logged requests, counting each (model, prompt) once.
pub fn actual_spend(records: &[LoggedUsage], pricing: &PricingTable) -> Result<ActualSpend> {
    let mut seen = BTreeSet::new();
    let mut currency: Option<String> = None;
    let (mut pt, mut ct) = (0u64, 0u64);
    let (mut pc, mut cc) = (Decimal::ZERO, Decimal::ZERO);
    for r in records {
        if !seen.insert((r.model.as_str(), r.prompt_hash.as_str())) {
            continue;
        }
        let m = pricing.get(&r.model)?;
        match &currency {
            None => currency = Some(m.currency.clone()),
            Some(c) if *c != m.currency => {
                return Err(Error::Config(format!("mixed currencies in pricing: {c} and {}", m.currency)))
            }
            _ => {}
        }
        pt += r.prompt_tokens;
        ct += r.completion_tokens;
        pc += request_cost(r.prompt_tokens, 0, m);
        cc += request_cost(0, r.completion_tokens, m);
    }
    let requests = seen.len();
    let total = pc + cc;
    Ok(ActualSpend {
        currency: currency.unwrap_or_else(default_currency),
        requests,
        prompt_tokens: pt,
        completion_tokens: ct,
        prompt_cost: pc,
        completion_cost: cc,
        total,
        mean_per_request: if requests == 0 { Decimal::ZERO } else { total / Decimal::from(requests) },
    })
}

/// Everything the `budget` command prints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub n_instances: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projected: Option<CorpusCost>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projected_currency: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<ActualSpend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<HumanCost>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_currency: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_coders: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub machine_minutes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
}

impl BudgetReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instances: {}", self.n_instances);
        if let (Some(p), Some(cur)) = (&self.projected, &self.projected_currency) {
            let _ = writeln!(
                out,
                "projected API cost: {} {cur} total, {} {cur} per instance",
                format_money(p.total, 2),
                format_money(p.mean, 4)
            );
        }
        if let Some(a) = &self.actual {
            let _ = writeln!(
                out,
                "actual API spend: {} {} over {} requests ({} prompt + {} completion tokens), {} per request",
                format_money(a.total, 2),
                a.currency,
                a.requests,
                a.prompt_tokens,
                a.completion_tokens,
                format_money(a.mean_per_request, 4)
            );
            let _ = writeln!(
                out,
                "  prompt share {} / completion share {}",
                format_money(a.prompt_cost, 4),
                format_money(a.completion_cost, 4)
            );
        }
        if let (Some(h), Some(cur), Some(n)) = (&self.human, &self.human_currency, self.human_coders) {
            let _ = writeln!(
                out,
                "human coding: {} h per coder, {n} coder(s), {} {cur}",
                h.hours.normalize(),
                format_money(h.total, 2)
            );
            if let Some(a) = &self.actual {
                if a.currency == *cur && !a.total.is_zero() {
                    let ratio = (h.total / a.total).round_dp(2);
                    let _ = writeln!(out, "human / API cost ratio: {ratio}");
                }
            }
        }
        if let (Some(m), Some(s)) = (self.machine_minutes, self.speedup) {
            let _ = writeln!(out, "machine time: {m:.1} min, speedup vs one coder: {s:.2}x");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn usd(rate_in: &str, rate_out: &str) -> CostModel {
        CostModel::new(d(rate_in), d(rate_out), "USD").unwrap()
    }

    fn us_student(n: u32) -> HumanBaseline {
        HumanBaseline { sentences_per_hour: d("100"), wage_per_hour: d("12.35"), n_coders: n, currency: "USD".into() }
    }

    #[test]
    fn request_cost_examples() {
        assert_eq!(request_cost(1000, 5, &usd("0.02", "0.02")), d("0.0201"));
        assert_eq!(request_cost(0, 0, &usd("0.03", "0.06")), Decimal::ZERO);
        assert!(CostModel::new(d("-1"), d("0"), "USD").is_err());
    }

    #[test]
    fn corpus_cost_examples() {
        let c = corpus_cost(&vec![d("93") / d("1910"); 1910]).unwrap();
        assert!((c.total - d("93")).abs() < d("0.000000001"));
        assert_eq!(format_money(c.mean, 4), "0.0487");
        let one = corpus_cost(&[d("0.05")]).unwrap();
        assert_eq!(one.total, one.mean);
        let zero = corpus_cost(&[Decimal::ZERO; 3]).unwrap();
        assert_eq!((zero.total, zero.mean), (Decimal::ZERO, Decimal::ZERO));
        assert!(corpus_cost(&[]).is_err());
    }

    #[test]
    fn human_cost_examples() {
        let one = human_cost(1910, &us_student(1), Some(d("19"))).unwrap();
        assert_eq!(one.hours, d("19"));
        assert_eq!(one.total, d("234.65"));
        let three = human_cost(1910, &us_student(3), Some(d("19"))).unwrap();
        assert_eq!(three.total, d("703.95"));
        let derived = human_cost(1910, &us_student(1), None).unwrap();
        assert_eq!(derived.hours, d("19.1"));
        let sek = HumanBaseline { wage_per_hour: d("170"), currency: "SEK".into(), ..us_student(3) };
        assert_eq!(human_cost(1910, &sek, Some(d("19"))).unwrap().total, d("9690"));
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(1140.0, 16.0).unwrap(), 71.25);
        assert_eq!(speedup(7.5, 7.5).unwrap(), 1.0);
        assert_eq!(speedup(0.0, 5.0).unwrap(), 0.0);
        assert!(speedup(5.0, 0.0).is_err());
    }

    #[test]
    fn completion_share_is_small_for_short_labels() {
        let m = usd("0.02", "0.02");
        // a prompt of ~1500 tokens and a three-label answer of ~8 tokens
        let prompt_part = request_cost(1500, 0, &m);
        let completion_part = request_cost(0, 8, &m);
        assert!(completion_part * d("100") < prompt_part);
    }

    #[test]
    fn pricing_table_parses_floats_exactly() {
        let t = PricingTable::from_toml_str(
            "[models.\"text-davinci-003\"]\ninput_per_1k = 0.02\noutput_per_1k = 0.02\n",
        )
        .unwrap();
        let m = t.get("text-davinci-003").unwrap();
        assert_eq!(m.input_per_1k, d("0.02"));
        assert_eq!(m.currency, "USD");
        assert!(t.get("gpt-4").is_err());
    }

    #[test]
    fn actual_spend_counts_unique_requests() {
        let mut t = PricingTable::default();
        t.models.insert("m".into(), usd("0.02", "0.02"));
        let rec = |h: &str| LoggedUsage { model: "m".into(), prompt_hash: h.into(), prompt_tokens: 1000, completion_tokens: 5 };
        let spend = actual_spend(&[rec("a"), rec("b"), rec("a")], &t).unwrap();
        assert_eq!(spend.requests, 2);
        assert_eq!(spend.total, d("0.0402"));
        let other = LoggedUsage { model: "x".into(), ..rec("c") };
        assert!(actual_spend(&[other], &t).is_err());
    }

    #[test]
    fn money_formatting_rounds_half_away() {
        assert_eq!(format_money(d("234.645"), 2), "234.65");
        assert_eq!(format_money(d("0.048691"), 4), "0.0487");
        assert_eq!(format_money(d("703.95"), 2), "703.95");
    }

    proptest! {
        #[test]
        fn request_cost_is_linear(a in 0u64..1_000_000, b in 0u64..1_000_000, c in 0u64..1000, cents_in in 0u32..1000, cents_out in 0u32..1000) {
            let m = CostModel::new(Decimal::new(cents_in.into(), 3), Decimal::new(cents_out.into(), 3), "USD").unwrap();
            prop_assert_eq!(request_cost(a + b, c, &m), request_cost(a, 0, &m) + request_cost(b, c, &m));
            prop_assert_eq!(request_cost(a, b, &m), request_cost(a, 0, &m) + request_cost(0, b, &m));
        }

        #[test]
        fn human_cost_scales(n in 1u32..10, wage_cents in 1i64..100_000, hours in 1i64..1000) {
            let base = HumanBaseline { sentences_per_hour: d("100"), wage_per_hour: Decimal::new(wage_cents, 2), n_coders: 1, currency: "USD".into() };
            let one = human_cost(10, &base, Some(Decimal::from(hours))).unwrap();
            let many = human_cost(10, &HumanBaseline { n_coders: n, ..base.clone() }, Some(Decimal::from(hours))).unwrap();
            prop_assert_eq!(many.total, one.total * Decimal::from(n));
            let double = HumanBaseline { wage_per_hour: base.wage_per_hour * d("2"), ..base.clone() };
            prop_assert_eq!(human_cost(10, &double, Some(Decimal::from(hours))).unwrap().total, one.total * d("2"));
        }

        #[test]
        fn corpus_total_is_exact_sum(parts in prop::collection::vec(0i64..10_000_000, 1..50)) {
            let costs: Vec<Decimal> = parts.iter().map(|p| Decimal::new(*p, 6)).collect();
            let exact: i64 = parts.iter().sum();
            let c = corpus_cost(&costs).unwrap();
            prop_assert_eq!(c.total, Decimal::new(exact, 6));
        }
    }
}
