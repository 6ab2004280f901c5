use clap::Parser;
use vispinn_cli::{run, Cli};

// The matrix products allocate large packing buffers on every call; a
// caching allocator avoids returning them to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
