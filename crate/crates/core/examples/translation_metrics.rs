//! chrF++, BLEU-n and translation success rate over a few sentence pairs.

use anyhow::Result;
use trc_core::translation::{
    chrf_pp, mt_agreement, ChrfConfig, LanguageProfile, TrigramDetector,
};

fn main() -> Result<()> {
    let hyps = [
        "Für welchen Arbeitgeber arbeitete Anna direkt vor Januar 1949?",
        "Which team did Ben play for right after Red FC?",
        "Pour quel parti Marie était-elle juste avant 1990 ?",
    ];
    let refs = [
        "Für welchen Arbeitgeber arbeitete Anna unmittelbar vor Januar 1949?",
        "Für welches Team spielte Ben direkt nach Red FC?",
        "Für welche Partei war Marie direkt vor 1990?",
    ];
    let cfg = ChrfConfig::default();
    for (h, r) in hyps.iter().zip(&refs) {
        println!("chrF++ {:6.2}  {h}", chrf_pp(h, r, &cfg));
    }

    let detector = TrigramDetector::new([
        LanguageProfile::from_corpus("de", &["der die das und ist nicht für welchen arbeitete direkt vor nach spielte"]),
        LanguageProfile::from_corpus("en", &["the and which did for right after before play work team"]),
        LanguageProfile::from_corpus("fr", &["le la les et pour quel était juste avant après elle parti"]),
    ]);
    let summary = mt_agreement(&hyps, &refs, &cfg, 4, Some((&detector, "de")))?;
    println!("\n{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
