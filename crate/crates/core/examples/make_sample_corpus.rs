//! Write the synthetic sample corpus (fixtures, ABIs, storage layout,
//! and tx lists) into a directory, ready for the CLI:
//!
//! ```text
//! cargo run -p txlens-core --example make_sample_corpus -- sample/
//! txlens infer 0x0202…02 sample/txlist.txt --config-dir sample/config
//! ```

use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("sample"));
    let corpus = txlens_core::samples::write_sample_corpus(&dir).unwrap_or_else(|e| {
        eprintln!("failed to write sample corpus: {e}");
        std::process::exit(1);
    });
    println!("sample corpus written under {}", dir.display());
    println!("  vault contract : {:?}", corpus.vault);
    println!("  token contract : {:?}", corpus.token);
    println!("  fixtures       : {} + exploit", corpus.fixtures.len());
    println!("  corpus list    : {}", corpus.txlist.display());
    println!("  check list     : {}", corpus.checklist.display());
    println!("  config dir     : {}", corpus.config_dir.display());
}
