fn main() {
    std::process::exit(losnet::cli::dispatch(std::env::args()));
}
