//! What a coding run costs next to human coders.

use llmcoder::budget::{corpus_cost, format_money, human_cost, request_cost, speedup, HumanBaseline, PricingTable};
use rust_decimal::Decimal;

fn main() -> llmcoder::Result<()> {
    let pricing = PricingTable::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample/pricing.toml"))?;
    let davinci = pricing.get("text-davinci-003")?;
    let one = request_cost(2380, 6, davinci);
    println!("one prompt of 2380 + 6 tokens: {} USD", format_money(one, 4));

    // 1910 sentences billed 93.00 in total.
    let per_instance = vec![Decimal::new(9300, 2) / Decimal::from(1910); 1910];
    let c = corpus_cost(&per_instance)?;
    println!("corpus: {} instances, {} USD total, {} USD each", c.count, format_money(c.total, 2), format_money(c.mean, 4));

    let mut baseline = HumanBaseline {
        sentences_per_hour: Decimal::from(100),
        wage_per_hour: Decimal::new(1235, 2),
        n_coders: 1,
        currency: "USD".into(),
    };
    let hours = Some(Decimal::from(19));
    let single = human_cost(1910, &baseline, hours)?;
    baseline.n_coders = 3;
    let triple = human_cost(1910, &baseline, hours)?;
    println!(
        "human coding: {} h, {} USD for one coder, {} USD for three",
        single.hours,
        format_money(single.total, 2),
        format_money(triple.total, 2)
    );
    println!("speedup of a 16 minute batch over 19 hours: {:.1}x", speedup(19.0 * 60.0, 16.0)?);
    Ok(())
}
