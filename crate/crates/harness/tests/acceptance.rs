use slowsde_harness::acceptance::{criteria, run_criterion};

fn main() {
    let mut failed = 0;
    for c in criteria() {
        let out = run_criterion(&c);
        println!("{}", out.line());
        if !out.passed() {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria().len() - failed, criteria().len());
    if failed > 0 {
        std::process::exit(1);
    }
}
