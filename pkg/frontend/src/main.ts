import { ConsoleApi } from "./api.js";
import { Console } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8008";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const operatorConsole = new Console(root, new ConsoleApi(baseUrl));
operatorConsole.mount();

const attachId = params.get("session");
if (attachId) void operatorConsole.attach(attachId);
