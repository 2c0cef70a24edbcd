fn main() {
    if let Ok(v) = std::env::var("KWMLP_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) => {
                kwmlp::parallel::init_global_threads(n);
            }
            Err(_) => {
                eprintln!("error: KWMLP_THREADS must be a non-negative integer");
                std::process::exit(1);
            }
        }
    }
    std::process::exit(kwmlp::cli::run(std::env::args_os()));
}
