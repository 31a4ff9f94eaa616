mod common;

use common::emulator::check_jumps;
use common::{all_fixture_files, compile_fixture};

#[test]
fn jump_resolution_matches_stack_emulator() {
    let mut contracts = 0;
    let mut compared = 0;
    let mut skipped = 0;
    for rel in all_fixture_files() {
        for art in compile_fixture(&rel) {
            let code = &art.deployed_bytecode;
            if code.is_empty() {
                continue;
            }
            contracts += 1;
            let r = check_jumps(code).unwrap_or_else(|e| panic!("{rel}/{}: {e}", art.contract_name));
            compared += r.compared;
            skipped += r.skipped;
        }
    }
    println!("cfg oracle: {contracts} contracts, {compared} jumps compared, {skipped} with non-constant targets");
    assert!(contracts >= 10);
    assert!(compared > 0);
}
