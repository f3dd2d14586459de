// Command-line entry point. Subcommands are wired in once the pipeline
// modules land; this translation unit keeps the build green meanwhile.
#include <cstdio>

int main() {
    std::puts("pixellens: not wired yet");
    return 1;
}
