//! Writes the synthetic geolocation data set (default: `data/`).

use std::path::PathBuf;

fn main() {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("data"), PathBuf::from);
    match llsim_core::geoloc::synth::write_fixtures(&dir) {
        Ok(files) => println!("wrote {} files under {}", files.len(), dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
