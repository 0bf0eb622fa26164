//! Fuses three provider answers, accepts a label and updates utilities.

use collabloc::fusion::{accept_label, weighted_average_fusion, ProviderResponse, Utility, UtilityLedger, DEFAULT_SMOOTHING};
use collabloc::LocationLabel;

fn label(room: &str) -> LocationLabel {
    LocationLabel::new("hall", room).expect("valid label")
}

fn main() -> collabloc::Result<()> {
    let mut responses = vec![
        ProviderResponse {
            provider: "alice".into(),
            ranked: Some(vec![(label("x"), 0.6), (label("y"), 0.3), (label("z"), 0.1)]),
            utility: Utility::FULL,
        },
        ProviderResponse {
            provider: "bob".into(),
            ranked: Some(vec![(label("y"), 0.7), (label("w"), 0.2)]),
            utility: Utility::new(0.5, 1.0)?,
        },
        ProviderResponse {
            provider: "carol".into(),
            ranked: Some(vec![(label("x"), 0.5), (label("w"), 0.5)]),
            utility: Utility::new(0.25, 1.0)?,
        },
        ProviderResponse {
            provider: "dave".into(),
            ranked: None,
            utility: Utility::FULL,
        },
    ];
    let fused = weighted_average_fusion(&responses)?;
    for (l, m) in fused.iter() {
        println!("{l}: {m:.6}");
    }
    println!("accepted at 0.5: {:?}", accept_label(&fused, 0.5));
    println!("accepted at 0.4: {:?}", accept_label(&fused, 0.4).map(|l| l.to_string()));

    let mut ledger = UtilityLedger::learning(DEFAULT_SMOOTHING)?;
    let accepted = accept_label(&fused, 0.4).expect("x clears 0.4");
    for _ in 0..3 {
        for r in &mut responses {
            r.utility = ledger.get(&r.provider);
        }
        ledger.record_feedback(&responses, &accepted)?;
    }
    for r in &responses {
        println!("{} noise utility after 3 rounds: {:.3}", r.provider, ledger.get(&r.provider).noise);
    }
    Ok(())
}
