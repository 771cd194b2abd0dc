use flashcg::memory::CountingAllocator;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

fn main() {
    std::process::exit(flashcg::cli::main_with_args(std::env::args_os()));
}
