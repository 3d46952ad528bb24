use clap::Parser;

fn main() {
    let cli = wlab_cli::Cli::parse();
    std::process::exit(wlab_cli::execute(&cli.command));
}
