fn main() {
    std::process::exit(taskdesc::cli::run(std::env::args_os()));
}
