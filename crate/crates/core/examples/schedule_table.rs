//! Prints the residual-scale table of every schedule family at a few steps.
//!
//! `cargo run --example schedule_table -- [T] [L]`

use prores::schedules::{ScheduleFamily, ScheduleSpec};

fn main() -> Result<(), prores::Error> {
    let mut args = std::env::args().skip(1);
    let warmup: u64 = args.next().map_or(Ok(100), |s| s.parse()).expect("T must be an integer");
    let layers: usize = args.next().map_or(Ok(4), |s| s.parse()).expect("L must be an integer");
    for family in ScheduleFamily::ALL {
        let spec = ScheduleSpec::new(family, warmup, layers)?;
        let t_max = spec.warmup_length().unwrap_or(warmup).max(warmup);
        println!("# {spec}");
        print!("{}", spec.table(t_max, (t_max / 4).max(1))?.to_csv());
    }
    Ok(())
}
