//! Running a config in-process and reading the report back.

use branchlab::experiment::{parse_config, report, run_config};
use std::path::Path;

fn main() {
    let text = r#"{
        "schema_version": 1,
        "name": "frequency-k3",
        "field": { "kind": "cylindrical-power", "n": 3, "c": [[1, 0], [0, 1]], "k": 3 },
        "experiment": { "kind": "frequency", "expected": 1.5 }
    }"#;
    let cfg = parse_config(text).unwrap();
    let out = std::env::temp_dir().join("branchlab-example-run");
    let outcome = run_config(&cfg, Path::new("."), &out).unwrap();
    for f in &outcome.manifest.files {
        println!("{:<16} {} {} bytes", f.path, &f.sha256[..12], f.bytes);
    }
    print!("{}", report(&out).unwrap().render());
}
