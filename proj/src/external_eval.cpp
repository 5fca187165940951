#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "psomerge/checkpoint.hpp"
#include "psomerge/fitness.hpp"

namespace psomerge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<uint64_t> g_eval_counter{0};

// Minimal POSIX-style tokenizer: whitespace-separated words with single and
// double quoting.
std::vector<std::string> shell_split(const std::string& cmd) {
    std::vector<std::string> tokens;
    std::string current;
    bool in_token = false;
    char quote = 0;
    for (char c : cmd) {
        if (quote) {
            if (c == quote) {
                quote = 0;
            } else {
                current += c;
            }
        } else if (c == '\'' || c == '"') {
            quote = c;
            in_token = true;
        } else if (c == ' ' || c == '\t' || c == '\n') {
            if (in_token) {
                tokens.push_back(std::move(current));
                current.clear();
                in_token = false;
            }
        } else {
            current += c;
            in_token = true;
        }
    }
    if (quote) {
        throw EvaluatorError("unterminated quote in command template");
    }
    if (in_token) tokens.push_back(std::move(current));
    return tokens;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::string tail_of(const std::string& s, size_t n = 2000) {
    return s.size() <= n ? s : s.substr(s.size() - n);
}

struct ProcessOutput {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

ProcessOutput run_process(const std::vector<std::string>& argv,
                          const std::string& task_env, double timeout_s) {
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
        throw EvaluatorError("pipe() failed");
    }

    const pid_t pid = fork();
    if (pid < 0) {
        throw EvaluatorError("fork() failed");
    }
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        setenv("SWARM_MERGE_TASKS", task_env.c_str(), 1);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        fprintf(stderr, "exec failed for '%s': %s\n", args[0], strerror(errno));
        _exit(127);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);

    ProcessOutput result;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_s);
    struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    bool open_fd[2] = {true, true};
    char buf[4096];

    while (open_fd[0] || open_fd[1]) {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            result.timed_out = true;
            break;
        }
        fds[0].events = open_fd[0] ? POLLIN : 0;
        fds[1].events = open_fd[1] ? POLLIN : 0;
        const int rc = poll(fds, 2, static_cast<int>(std::min<long long>(remaining.count(), 200)));
        if (rc < 0 && errno != EINTR) break;
        for (int i = 0; i < 2; ++i) {
            if (!open_fd[i] || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
            const ssize_t n = read(fds[i].fd, buf, sizeof(buf));
            if (n > 0) {
                (i == 0 ? result.out : result.err).append(buf, static_cast<size_t>(n));
            } else if (n == 0 || (n < 0 && errno != EINTR)) {
                open_fd[i] = false;
            }
        }
    }
    close(out_pipe[0]);
    close(err_pipe[0]);

    if (result.timed_out) {
        kill(pid, SIGKILL);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

std::string last_line(const std::string& text) {
    size_t end = text.size();
    while (end > 0 && (text[end - 1] == '\n' || text[end - 1] == '\r')) --end;
    size_t begin = text.rfind('\n', end == 0 ? 0 : end - 1);
    begin = begin == std::string::npos ? 0 : begin + 1;
    return text.substr(begin, end - begin);
}

// RAII removal of the temp checkpoint.
struct TempFile {
    fs::path path;
    ~TempFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

}  // namespace

FitnessReport external_evaluate(const std::string& cmd_template,
                                const ParameterSet& theta,
                                const std::vector<std::string>& task_names,
                                double timeout_s) {
    if (cmd_template.find("{checkpoint}") == std::string::npos) {
        throw EvaluatorError("command template must contain the {checkpoint} placeholder");
    }
    if (task_names.empty()) {
        throw EvaluatorError("task name list must be non-empty");
    }

    const uint64_t id = g_eval_counter.fetch_add(1);
    std::ostringstream name;
    name << "psomerge_eval_" << getpid() << "_" << id << ".safetensors";
    TempFile temp{fs::temp_directory_path() / name.str()};
    save_checkpoint(theta, temp.path);

    auto argv = shell_split(cmd_template);
    if (argv.empty()) {
        throw EvaluatorError("command template is empty");
    }
    const std::string abspath = fs::absolute(temp.path).string();
    for (auto& token : argv) replace_all(token, "{checkpoint}", abspath);

    std::string task_env;
    for (size_t i = 0; i < task_names.size(); ++i) {
        if (i) task_env += ",";
        task_env += task_names[i];
    }

    const ProcessOutput proc = run_process(argv, task_env, timeout_s);
    if (proc.timed_out) {
        throw EvaluatorError("evaluator timed out after " + std::to_string(timeout_s) + " s",
                             tail_of(proc.err));
    }
    if (proc.exit_code != 0) {
        throw EvaluatorError("evaluator exited with code " + std::to_string(proc.exit_code),
                             tail_of(proc.err));
    }

    const std::string line = last_line(proc.out);
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::exception& e) {
        throw EvaluatorError(std::string("malformed evaluator output: ") + e.what() +
                                 " (last line: '" + tail_of(line, 200) + "')",
                             tail_of(proc.err));
    }
    if (!doc.is_object() || !doc.contains("scores") || !doc["scores"].is_object()) {
        throw EvaluatorError("evaluator output missing the \"scores\" object",
                             tail_of(proc.err));
    }

    std::map<std::string, double> scores;
    for (const auto& [task, value] : doc["scores"].items()) {
        if (!value.is_number()) {
            throw EvaluatorError("non-numeric score for task '" + task + "'",
                                 tail_of(proc.err));
        }
        scores[task] = value.get<double>();
    }
    std::string missing, extra;
    for (const auto& task : task_names) {
        if (!scores.count(task)) missing += (missing.empty() ? "" : ", ") + task;
    }
    for (const auto& [task, value] : scores) {
        if (std::find(task_names.begin(), task_names.end(), task) == task_names.end()) {
            extra += (extra.empty() ? "" : ", ") + task;
        }
    }
    if (!missing.empty()) {
        throw EvaluatorError("incomplete scores: missing " + missing, tail_of(proc.err));
    }
    if (!extra.empty()) {
        throw EvaluatorError("unexpected task scores: " + extra, tail_of(proc.err));
    }
    return make_report(std::move(scores));
}

}  // namespace psomerge
