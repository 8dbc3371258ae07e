fn main() {
    std::process::exit(ddm_gnn::cli::run(std::env::args_os()));
}
