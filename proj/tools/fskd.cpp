// Placeholder main; replaced once the runner exists.
int main() { return 0; }
