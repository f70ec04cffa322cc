//! Regenerates the bundled feeder documents and starter profiles under
//! `data/`. Run from the workspace root:
//!
//! ```text
//! cargo run -p vvo-core --example bundle_data
//! ```

use vvo_core::feeder::{feeder_to_json, presets};
use vvo_core::scenario::{save_profiles, synthetic_profiles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all("data")?;
    for feeder in [presets::ring4(), presets::toy10(), presets::toy25(), presets::ieee123()] {
        let path = format!("data/{}.json", feeder.name);
        std::fs::write(&path, feeder_to_json(&feeder) + "\n")?;
        println!("wrote {path}");
    }

    let toy25 = presets::toy25();
    let profiles = synthetic_profiles(&toy25, 6, 30.0, 1.0);
    save_profiles(&profiles, &toy25, "data/profiles_toy25.csv")?;
    println!("wrote data/profiles_toy25.csv");

    let ieee = presets::ieee123();
    let profiles = synthetic_profiles(&ieee, 24, 25.0, 1.0);
    save_profiles(&profiles, &ieee, "data/profiles_ieee123.csv")?;
    println!("wrote data/profiles_ieee123.csv");
    Ok(())
}
