//! Balanced accuracy, cross-modal interference deltas and judge aggregation.

use std::collections::BTreeMap;

use gapdiag::stats::{
    interference_delta, judge_aggregate, parse_answer_letter, InterferenceDirection, JudgeRecord, SplitReport,
};

fn report(v: [f64; 4]) -> gapdiag::Result<SplitReport> {
    let acc: BTreeMap<String, f64> = ["std_v", "std_a", "mis_v", "mis_a"].iter().map(|s| s.to_string()).zip(v).collect();
    SplitReport::from_accuracies(acc)
}

fn main() -> gapdiag::Result<()> {
    let av = report([64.4, 69.0, 16.0, 0.6])?;
    let vision_only = report([66.0, 60.0, 22.2, 0.6])?;
    println!("audio-visual Bal {:.1}", av.bal);
    println!(
        "A->V interference {:+.1}pp",
        interference_delta(&av, &vision_only, InterferenceDirection::AudioToVision)?
    );

    let responses = ["The answer is (B).", "I think C. Actually E.", "None of these", "Answer: F"];
    let gold = ['B', 'E', 'A', 'E'];
    let records: Vec<JudgeRecord> = responses
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(i, (r, g))| {
            let parsed = parse_answer_letter(r);
            let pred_correct = parsed.is_some_and(|l| l.as_char() == g);
            JudgeRecord { pred_correct, extraction_correct: parsed.is_some(), explanation_correct: pred_correct && i != 1 }
        })
        .collect();
    let j = judge_aggregate(&records)?;
    println!("P-Acc {:.1}  E-Acc {:.1}  R+R {:.1}  R+W {:.1}", j.p_acc, j.e_acc, j.r_plus_r, j.r_plus_w);
    Ok(())
}
