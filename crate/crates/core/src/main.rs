use modular_asr::cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (code, message) = cli::run(std::env::args_os());
    if code == 0 {
        println!("{message}");
    } else if message.starts_with('{') {
        println!("{message}");
    } else {
        eprint!("{message}");
    }
    std::process::exit(code);
}
