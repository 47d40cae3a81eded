//! Driving the simulated instruments directly: fetch a plate, dispense two
//! mixes and photograph them.

use colorpicker::color::RatioVector;
use colorpicker::devices::{decode_image, ProtocolEntry, SimulatedWorkcell};
use colorpicker::protocol::{Command, InProcessClient, Transport};
use colorpicker::scene::SceneConfig;
use colorpicker::{fixtures, vision};

fn main() {
    let cell = fixtures::workcell();
    let sim = SimulatedWorkcell::standard(&cell.simulation(Default::default()));
    let client = |name: &str| InProcessClient::new(sim.module(name).expect("module exists").clone());
    let send = |module: &str, cmd: Command| {
        let r = client(module).request(&cmd).expect("in-process transport");
        println!("{module:>8} {:<12} {:?} {:>6.1}s {}", cmd.action, r.status, r.sim_duration_s(), r.error.clone().unwrap_or_default());
        r
    };

    let plate = send("sciclops", Command::new("1", "sciclops", "get_plate"));
    println!("         plate {}", plate.data["plate_id"]);
    send("pf400", Command::new("2", "pf400", "transfer").arg("source", "exchange").arg("target", "camera_nest"));
    send("barty", Command::new("3", "barty", "fill"));
    send("pf400", Command::new("4", "pf400", "transfer").arg("source", "camera_nest").arg("target", "ot2_deck"));

    let protocol = vec![
        ProtocolEntry::new(0, RatioVector::new(0.5, 0.0, 0.5, 0.0).unwrap()),
        ProtocolEntry::new(1, RatioVector::new(0.0, 0.3, 0.3, 0.1).unwrap()),
    ];
    send("ot2", Command::new("5", "ot2", "run_protocol").arg("protocol", serde_json::to_value(&protocol).unwrap()));
    send("pf400", Command::new("6", "pf400", "transfer").arg("source", "ot2_deck").arg("target", "camera_nest"));
    let shot = send("camera", Command::new("7", "camera", "capture"));

    let (image, ppm) = decode_image(&shot.data).expect("image payload");
    println!("captured {}x{} image, {} bytes", image.width(), image.height(), ppm.len());
    let analysis = vision::analyze(&image, &SceneConfig::default()).expect("plate found");
    for w in analysis.wells.iter().take(3) {
        println!("{:?}", w);
    }

    // the exchange is empty again, so this transfer is refused
    send("pf400", Command::new("8", "pf400", "transfer").arg("source", "exchange").arg("target", "camera_nest"));
}
