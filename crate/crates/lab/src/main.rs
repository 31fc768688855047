use std::process::exit;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = match std::env::var("LAB_THREADS") {
        Ok(raw) if !raw.trim().is_empty() => {
            let n: usize = match raw.trim().parse() {
                Ok(n) if n > 0 => n,
                _ => {
                    eprintln!("error: LAB_THREADS must be a positive integer, got `{raw}`");
                    exit(2);
                }
            };
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: thread pool: {e}");
                    exit(2);
                }
            };
            pool.install(|| lab::cli::run(&args))
        }
        _ => lab::cli::run(&args),
    };
    exit(code);
}
