import { AnnotationClient } from "./client.js";
import { initAnnotationUi } from "./ui.js";

const root = document.getElementById("app");
if (root !== null) {
  void initAnnotationUi(root, new AnnotationClient(""));
}
