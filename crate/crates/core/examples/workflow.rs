//! The workflow engine running the bundled workflows on a virtual clock, with
//! every command attempt in the ledger.

use colorpicker::color::RatioVector;
use colorpicker::devices::{ProtocolEntry, SimulatedWorkcell};
use colorpicker::fixtures;
use colorpicker::protocol::Args;
use colorpicker::workflow::{Engine, SimClock};

fn main() {
    let cell = fixtures::workcell();
    let workflows = fixtures::workflows();
    let sim = SimulatedWorkcell::standard(&cell.simulation(Default::default()));
    let mut engine = Engine::in_process(cell, &sim, SimClock::virtual_clock()).unwrap();

    let protocol: Vec<_> = (0..8).map(|w| ProtocolEntry::new(w, RatioVector::new(0.1 * w as f64, 0.1, 0.1, 0.0).unwrap())).collect();
    let mut payload = Args::new();
    payload.insert("protocol".into(), serde_json::to_value(&protocol).unwrap());

    for (wf, payload) in [(&workflows.newplate, Args::new()), (&workflows.mix, payload), (&workflows.trashplate, Args::new())] {
        let run = engine.run_workflow(wf, &payload).unwrap();
        println!("{} {:?} {:.1}s -> {:.1}s", run.workflow, run.status, run.start, run.end);
        for s in &run.steps {
            println!("    {:<24} {:?}", s.step_name, s.status);
        }
    }
    println!("simulated time {:.1}s, {} ledger entries", engine.now(), engine.ledger().entries().len());
}
