// Acceptance gate: runs `verify` twice, prints one line per criterion, exits nonzero on any failure.
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string stdout_text;
};

Run run(const std::string& cmd) {
    Run r;
    FILE* p = popen((cmd + " 2>&1").c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.stdout_text.append(buf.data(), n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

struct Line {
    bool pass = false;
    std::string name;
    double seconds = 0.0;
    std::string details;
};

std::map<int, Line> parse(const std::string& text) {
    static const std::regex re(R"(^criterion (\d+): (PASS|FAIL) (.*) seconds=([0-9.]+) (.*)$)");
    std::map<int, Line> out;
    std::istringstream in(text);
    std::string line;
    std::smatch m;
    while (std::getline(in, line))
        if (std::regex_match(line, m, re)) out[std::stoi(m[1])] = {m[2] == "PASS", m[3], std::stod(m[4]), m[5]};
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-omnical>\n";
        return 1;
    }
    const std::string exe = argv[1];
    const fs::path base = fs::temp_directory_path() / ("omnical_acceptance_" + std::to_string(getpid()));
    fs::remove_all(base);
    const fs::path a = base / "a", b = base / "b";
    const Run ra = run("\"" + exe + "\" verify --out \"" + a.string() + "\"");
    const Run rb = run("\"" + exe + "\" verify --out \"" + b.string() + "\"");
    std::cout << ra.stdout_text;

    auto la = parse(ra.stdout_text);
    // Runtime caps in seconds for the criteria that carry one.
    const std::map<int, double> caps = {{1, 30.0}, {4, 10.0}, {9, 600.0}};
    bool all = true;
    std::cout << "\n";
    for (int id = 1; id <= 13; ++id) {
        const auto it = la.find(id);
        bool ok = it != la.end() && it->second.pass;
        std::string note;
        if (it == la.end()) note = " (no result line)";
        if (ok && caps.count(id) && it->second.seconds >= caps.at(id)) {
            ok = false;
            note = " (runtime " + std::to_string(it->second.seconds) + " s over the cap)";
        }
        all = all && ok;
        std::cout << "acceptance " << id << ": " << (ok ? "PASS" : "FAIL") << " "
                  << (it == la.end() ? "" : it->second.name) << note << "\n";
    }
    bool same = ra.status == rb.status && (ra.status == 0 || ra.status == 2) && fs::exists(a) && fs::exists(b);
    std::string why;
    if (same) {
        const auto ta = tree(a), tb = tree(b);
        if (ta.empty()) same = false, why = " (no output files)";
        for (const auto& [k, v] : ta) {
            const auto f = tb.find(k);
            if (f == tb.end() || f->second != v) {
                same = false;
                why = " (" + k + " differs)";
                break;
            }
        }
        if (same && ta.size() != tb.size()) same = false, why = " (file sets differ)";
    } else {
        why = " (verify exit codes " + std::to_string(ra.status) + ", " + std::to_string(rb.status) + ")";
    }
    all = all && same;
    std::cout << "acceptance 14: " << (same ? "PASS" : "FAIL") << " byte-identical verify outputs" << why << "\n";
    fs::remove_all(base);
    return all ? 0 : 1;
}
