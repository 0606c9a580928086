fn main() {
    // Behave like a regular pipeline tool when stdout closes early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(sta_core::cli::main_from_args(std::env::args_os()));
}
