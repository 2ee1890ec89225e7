//! Regenerates the bundled synthetic data files:
//!
//! ```text
//! cargo run -p gpcrlm --example make_fixture [-- <out_dir>]
//! ```
//!
//! Writes `fixture_synthetic.csv` (293 records, 62 classes, the same count
//! structure as the upstream export), plus small BW-annotation and
//! mutagenesis demo files for the `4GBR` entry.

use std::fmt::Write as _;
use std::path::PathBuf;

use gpcrlm::corpus::synthetic::full_fixture;
use gpcrlm::corpus::{locate_motif, MotifKind};

/// Seed of the bundled fixture; changing it changes the checked-in data.
const FIXTURE_SEED: u64 = 20240817;

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"));
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    let records = full_fixture(FIXTURE_SEED);
    let mut csv = String::from("id,receptor_class,sequence\n");
    for r in &records {
        writeln!(csv, "{},{},{}", r.id, r.receptor_class, r.sequence).unwrap();
    }
    let fixture_path = out_dir.join("fixture_synthetic.csv");
    std::fs::write(&fixture_path, csv).expect("write fixture");
    println!("{} records -> {}", records.len(), fixture_path.display());

    // BW annotations for the 4GBR entry: helix-style labels around each
    // planted motif, enough context for near-match demonstrations.
    let gbr = records.iter().find(|r| r.id == "4GBR").expect("4GBR present");
    let mut ann = String::from("id,seq_index,bw_label\n");
    let spans = [
        (MotifKind::EDRY, 3, 44usize),  // 3.44.. around E/DRY (R = 3.50)
        (MotifKind::CWxP, 6, 42),       // 6.42.. around CWxP (C = 6.47)
        (MotifKind::NPxxY, 7, 44),      // 7.44.. around NPxxY (N = 7.49)
    ];
    for (kind, helix, first_label) in spans {
        let hit = locate_motif(gbr, kind, kind.default_window())
            .unwrap()
            .expect("4GBR carries all three motifs");
        let from = hit.start.saturating_sub(5);
        let to = (hit.start + kind.pattern().len() + 5).min(gbr.sequence.len());
        for idx in from..to {
            let label = first_label + (idx - from);
            writeln!(ann, "4GBR,{idx},{helix}.{label}").unwrap();
        }
    }
    let ann_path = out_dir.join("annotations_demo.csv");
    std::fs::write(&ann_path, ann).expect("write annotations");
    println!("annotations -> {}", ann_path.display());

    let mutagenesis = "class,bw,effect\n\
        adrb2,6.47,thermostabilization\n\
        adrb2,6.44,receptor-expression\n\
        adrb2,3.50,receptor-ligand-bond\n\
        adrb2,7.53,thermostabilization\n";
    let mut_path = out_dir.join("mutagenesis_demo.csv");
    std::fs::write(&mut_path, mutagenesis).expect("write mutagenesis");
    println!("mutagenesis -> {}", mut_path.display());
}
