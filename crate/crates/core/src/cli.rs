/// Entry point for the command-line interface.
pub fn run<I, T>(_argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    0
}
